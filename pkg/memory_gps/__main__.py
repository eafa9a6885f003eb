import sys

from memory_gps.cli import main

sys.exit(main())
