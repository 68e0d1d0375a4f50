"""Dependency-free SVG scatter of per-strategy Pareto front points."""
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
WIDTH, HEIGHT = 640, 480
MARGIN = dict(left=70, right=150, top=30, bottom=55)


def _ticks(lo, hi, n=5):
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def pareto_svg(points_by_strategy, title="Pareto front points (utility vs. DER)"):
    """Render ``{strategy: [(utility, der), ...]}`` as an SVG document string."""
    all_pts = [p for pts in points_by_strategy.values() for p in pts]
    if all_pts:
        xs, ys = zip(*all_pts)
        x_lo, x_hi = min(xs), max(xs)
        y_lo, y_hi = min(ys), max(ys)
    else:
        x_lo, x_hi, y_lo, y_hi = 0.0, 1.0, 0.0, 1.0
    pad_x = (x_hi - x_lo) * 0.05 or 0.05
    pad_y = (y_hi - y_lo) * 0.05 or 0.05
    x_lo, x_hi, y_lo, y_hi = x_lo - pad_x, x_hi + pad_x, y_lo - pad_y, y_hi + pad_y

    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - x_lo) / (x_hi - x_lo) * pw

    def sy(y):
        return MARGIN["top"] + ph - (y - y_lo) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x_lo, x_hi):
        out.append(f'<line x1="{sx(t):.1f}" y1="{MARGIN["top"] + ph}" x2="{sx(t):.1f}" '
                   f'y2="{MARGIN["top"] + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(t):.1f}" y="{MARGIN["top"] + ph + 18}" text-anchor="middle">{t:.3f}</text>')
    for t in _ticks(y_lo, y_hi):
        out.append(f'<line x1="{MARGIN["left"] - 5}" y1="{sy(t):.1f}" x2="{MARGIN["left"]}" '
                   f'y2="{sy(t):.1f}" stroke="black"/>')
        out.append(f'<text x="{MARGIN["left"] - 8}" y="{sy(t) + 4:.1f}" text-anchor="end">{t:.3f}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">utility</text>')
    out.append(f'<text transform="translate(18,{MARGIN["top"] + ph / 2:.1f}) rotate(-90)" '
               f'text-anchor="middle">DER</text>')

    for i, (name, pts) in enumerate(sorted(points_by_strategy.items())):
        color = PALETTE[i % len(PALETTE)]
        for u, d in pts:
            out.append(f'<circle cx="{sx(u):.2f}" cy="{sy(d):.2f}" r="3" fill="{color}" fill-opacity="0.6"/>')
        ly = MARGIN["top"] + 16 + 20 * i
        lx = WIDTH - MARGIN["right"] + 15
        out.append(f'<circle cx="{lx}" cy="{ly - 4}" r="5" fill="{color}"/>')
        out.append(f'<text x="{lx + 12}" y="{ly}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
