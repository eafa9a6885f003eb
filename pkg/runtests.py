#!/usr/bin/env python
# -*- coding: utf-8 -*-

import os
import sys

# MEMORY_GPS_ACCEPTANCE=1 also runs the full training acceptance tests
if __name__ == '__main__':
    import pytest

    args = sys.argv[1:] or [os.path.join('memory_gps', 'tests')]
    sys.exit(pytest.main(args))
