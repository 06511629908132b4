"""Static SVG output: latent scatter plots and per-axis histograms.

Coordinates are written with fixed precision so identical inputs give
identical bytes.
"""
import numpy as np

WIDTH = 480
HEIGHT = 480
MARGIN = 40
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _fmt(v):
    return f"{v:.3f}"


def _scale(values, lo_px, hi_px):
    lo, hi = float(np.min(values)), float(np.max(values))
    span = hi - lo if hi > lo else 1.0
    return lo_px + (values - lo) / span * (hi_px - lo_px)


def _ramp(t):
    # blue -> red colour ramp for a position in [0, 1]
    r = int(round(255 * t))
    b = int(round(255 * (1.0 - t)))
    return f"#{r:02x}40{b:02x}"


def _header(title):
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<title>{title}</title>',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]


def scatter_svg(X, labels=None, dims=(0, 1), title="latents"):
    """Scatter of two latent columns, one ``circle`` per row.

    Points are coloured by integer label when given, otherwise by row position.
    A single-column input is plotted against the row index.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    N = X.shape[0]
    if X.shape[1] >= 2:
        xs, ys = X[:, dims[0]], X[:, dims[1]]
    else:
        xs, ys = np.arange(N, dtype=np.float64), X[:, 0]
    px = _scale(xs, MARGIN, WIDTH - MARGIN)
    py = _scale(ys, HEIGHT - MARGIN, MARGIN)
    if labels is not None:
        labels = np.asarray(labels).ravel()
        classes = {c: k for k, c in enumerate(np.unique(labels))}
        colours = [PALETTE[classes[c] % len(PALETTE)] for c in labels]
    else:
        colours = [_ramp(i / max(N - 1, 1)) for i in range(N)]
    lines = _header(title)
    lines.append('<g class="markers" stroke="none" fill-opacity="0.8">')
    for x, y, c in zip(px, py, colours):
        lines.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="3" fill="{c}"/>')
    lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def histogram_svg(values, bins=30, title="histogram"):
    values = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    peak = max(int(counts.max()), 1)
    bar_w = (WIDTH - 2 * MARGIN) / bins
    lines = _header(title)
    lines.append('<g class="bars" fill="#4c72b0">')
    for k, c in enumerate(counts):
        h = (HEIGHT - 2 * MARGIN) * c / peak
        x = MARGIN + k * bar_w
        y = HEIGHT - MARGIN - h
        lines.append(f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(bar_w)}" '
                     f'height="{_fmt(h)}"/>')
    lines.append("</g>")
    lines.append(f'<text x="{MARGIN}" y="{HEIGHT - 10}" font-size="12">'
                 f'{_fmt(edges[0])} .. {_fmt(edges[-1])}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
