"""Minimal static SVG writer for log-log convergence plots.

No plotting dependency: experiments emit figures as output artifacts, and the
writer is deterministic so repeated runs produce identical bytes.
"""

import math

WIDTH, HEIGHT = 480, 360
MARGIN = 56


def _log_ticks(lo, hi):
    start = math.floor(math.log10(lo))
    stop = math.ceil(math.log10(hi))
    return [10.0 ** e for e in range(start, stop + 1)]


def write_loglog_plot(path, xs, ys, *, title, xlabel, ylabel):
    """Scatter + polyline of positive data on log-log axes."""
    pts = [(x, y) for x, y in zip(xs, ys) if x > 0 and y > 0]
    if not pts:
        raise ValueError("log-log plot needs positive data")
    xlo, xhi = min(p[0] for p in pts), max(p[0] for p in pts)
    ylo, yhi = min(p[1] for p in pts), max(p[1] for p in pts)
    xticks = _log_ticks(xlo, xhi)
    yticks = _log_ticks(ylo, yhi)
    lx0, lx1 = math.log10(xticks[0]), math.log10(xticks[-1])
    ly0, ly1 = math.log10(yticks[0]), math.log10(yticks[-1])
    if lx1 == lx0:
        lx1 = lx0 + 1
    if ly1 == ly0:
        ly1 = ly0 + 1

    def px(x):
        return MARGIN + (math.log10(x) - lx0) / (lx1 - lx0) * (WIDTH - 2 * MARGIN)

    def py(y):
        return HEIGHT - MARGIN - (math.log10(y) - ly0) / (ly1 - ly0) * (HEIGHT - 2 * MARGIN)

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{WIDTH // 2}" y="{HEIGHT - 8}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="14" y="{HEIGHT // 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {HEIGHT // 2})">{ylabel}</text>',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" '
        f'height="{HEIGHT - 2 * MARGIN}" fill="none" stroke="black"/>',
    ]
    for t in xticks:
        x = px(t)
        lines.append(
            f'<line x1="{x:.2f}" y1="{HEIGHT - MARGIN}" x2="{x:.2f}" '
            f'y2="{HEIGHT - MARGIN + 5}" stroke="black"/>'
        )
        lines.append(
            f'<text x="{x:.2f}" y="{HEIGHT - MARGIN + 18}" text-anchor="middle" '
            f'font-size="10">1e{int(round(math.log10(t)))}</text>'
        )
    for t in yticks:
        y = py(t)
        lines.append(
            f'<line x1="{MARGIN - 5}" y1="{y:.2f}" x2="{MARGIN}" y2="{y:.2f}" stroke="black"/>'
        )
        lines.append(
            f'<text x="{MARGIN - 8}" y="{y + 3:.2f}" text-anchor="end" '
            f'font-size="10">1e{int(round(math.log10(t)))}</text>'
        )
    path_d = " ".join(
        f"{'M' if i == 0 else 'L'} {px(x):.2f} {py(y):.2f}" for i, (x, y) in enumerate(pts)
    )
    lines.append(f'<path d="{path_d}" fill="none" stroke="steelblue" stroke-width="1.5"/>')
    for x, y in pts:
        lines.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="steelblue"/>')
    lines.append("</svg>")
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")
