"""
Self-contained SVG figures built from polyline primitives.
"""
from xml.sax.saxutils import escape

import numpy as np

from memory_gps.memory import augment_rollout

WIDTH = 640
HEIGHT = 420
MARGIN = 60
COLORS = ('#1f77b4', '#d62728', '#2ca02c', '#ff7f0e', '#9467bd', '#8c564b', '#e377c2')


class Frame:
    """
    Maps data coordinates onto the plotting area of the canvas.
    """

    def __init__(self, x_range, y_range, width=WIDTH, height=HEIGHT, margin=MARGIN):
        self.x0, self.x1 = _padded(*x_range)
        self.y0, self.y1 = _padded(*y_range)
        self.width, self.height, self.margin = width, height, margin

    def x(self, value):
        span = self.width - 2 * self.margin
        return self.margin + (value - self.x0) / (self.x1 - self.x0) * span

    def y(self, value):
        span = self.height - 2 * self.margin
        return self.height - self.margin - (value - self.y0) / (self.y1 - self.y0) * span

    def points(self, xs, ys):
        return ' '.join(f'{self.x(a):.2f},{self.y(b):.2f}' for a, b in zip(xs, ys))


def _padded(low, high):
    low, high = float(low), float(high)
    if high - low < 1e-12:
        return low - 0.5, high + 0.5
    return low, high


def _document(frame, title, body):
    header = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{frame.width}" '
        f'height="{frame.height}" viewBox="0 0 {frame.width} {frame.height}">'
    )
    lines = [
        header,
        f'<rect width="{frame.width}" height="{frame.height}" fill="white"/>',
        f'<text x="{frame.width / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{escape(title)}</text>',
    ]
    lines.extend(body)
    lines.append('</svg>')
    return '\n'.join(lines) + '\n'


def _axes(frame, x_label, y_label, ticks=5):
    m, w, h = frame.margin, frame.width, frame.height
    body = [
        f'<line x1="{m}" y1="{h - m}" x2="{w - m}" y2="{h - m}" stroke="black"/>',
        f'<line x1="{m}" y1="{m}" x2="{m}" y2="{h - m}" stroke="black"/>',
        f'<text x="{w / 2:.1f}" y="{h - 15}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12">{escape(x_label)}</text>',
        f'<text x="15" y="{h / 2:.1f}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12" transform="rotate(-90 15 {h / 2:.1f})">{escape(y_label)}</text>',
    ]
    for value in np.linspace(frame.x0, frame.x1, ticks):
        x = frame.x(value)
        body.append(f'<line x1="{x:.2f}" y1="{h - m}" x2="{x:.2f}" y2="{h - m + 5}" stroke="black"/>')
        body.append(
            f'<text x="{x:.2f}" y="{h - m + 18}" text-anchor="middle" font-family="sans-serif" '
            f'font-size="10">{value:.3g}</text>'
        )
    for value in np.linspace(frame.y0, frame.y1, ticks):
        y = frame.y(value)
        body.append(f'<line x1="{m - 5}" y1="{y:.2f}" x2="{m}" y2="{y:.2f}" stroke="black"/>')
        body.append(
            f'<text x="{m - 8}" y="{y + 3:.2f}" text-anchor="end" font-family="sans-serif" '
            f'font-size="10">{value:.3g}</text>'
        )
    return body


def _legend(frame, labels):
    body = []
    for index, label in enumerate(labels):
        color = COLORS[index % len(COLORS)]
        y = frame.margin + 14 * index
        x = frame.width - frame.margin - 110
        body.append(f'<line x1="{x}" y1="{y}" x2="{x + 20}" y2="{y}" stroke="{color}" stroke-width="2"/>')
        body.append(
            f'<text x="{x + 26}" y="{y + 4}" font-family="sans-serif" font-size="11">'
            f'{escape(label)}</text>'
        )
    return body


def learning_curve_svg(rows, title, threshold=None):
    """
    Distance to the target against cumulative samples, one polyline per
    condition; ``rows`` are ``(iter, samples, condition, distance)``.
    """
    conditions = sorted({row[2] for row in rows})
    samples = [row[1] for row in rows] or [0]
    distances = [row[3] for row in rows] or [0.0]
    y_high = max(distances + ([threshold] if threshold else []))
    frame = Frame((0, max(samples)), (0, y_high))
    body = _axes(frame, 'samples', 'distance to target')
    if threshold:
        y = frame.y(threshold)
        body.append(
            f'<line x1="{frame.margin}" y1="{y:.2f}" x2="{frame.width - frame.margin}" '
            f'y2="{y:.2f}" stroke="gray" stroke-dasharray="6,4"/>'
        )
    for index, condition in enumerate(conditions):
        points = sorted((row[1], row[3]) for row in rows if row[2] == condition)
        xs, ys = zip(*points)
        color = COLORS[index % len(COLORS)]
        body.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="2" '
            f'points="{frame.points(xs, ys)}"/>'
        )
    body.extend(_legend(frame, [f'condition {c}' for c in conditions]))
    return _document(frame, title, body)


def traces_svg(task, aug, policy, title):
    """
    Plane paths of the deterministic policy rollout of every condition,
    with start points (squares) and targets (circles).
    """
    paths = [
        augment_rollout(task, aug, policy, condition).x[:, :2]
        for condition in range(task.num_conditions)
    ]
    starts = [task.initial_state(c)[:2] for c in range(task.num_conditions)]
    targets = [np.asarray(t)[:2] for t in task.cost_spec.targets]
    everything = np.vstack(paths + [np.array(starts), np.array(targets)])
    low, high = everything.min(), everything.max()
    frame = Frame((low, high), (low, high), width=HEIGHT, height=HEIGHT)
    body = _axes(frame, 'x', 'y')
    for index, path in enumerate(paths):
        color = COLORS[index % len(COLORS)]
        body.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="2" '
            f'points="{frame.points(path[:, 0], path[:, 1])}"/>'
        )
        sx, sy = frame.x(starts[index][0]), frame.y(starts[index][1])
        body.append(f'<rect x="{sx - 4:.2f}" y="{sy - 4:.2f}" width="8" height="8" fill="{color}"/>')
    for target in targets:
        body.append(
            f'<circle cx="{frame.x(target[0]):.2f}" cy="{frame.y(target[1]):.2f}" r="6" '
            f'fill="none" stroke="black" stroke-width="2"/>'
        )
    return _document(frame, title, body)


def write_learning_curve(path, rows, title, threshold=None):
    with open(path, 'w') as f:
        f.write(learning_curve_svg(rows, title, threshold))


def write_traces(path, task, aug, policy, title):
    with open(path, 'w') as f:
        f.write(traces_svg(task, aug, policy, title))
