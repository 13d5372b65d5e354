"""Pure-Python kernels; reference for, and fallback to, the compiled ``_core``.

Every function here has a twin in ``_core.pyx`` with the same signature and,
up to floating-point summation order in the angular quadrature, the same
results.
"""

import math

import numpy as np
from scipy.spatial import cKDTree

OVERLAP, MULTI_STRAUSS, KNN, STRAUSS_DISC, GEYER, AREA = range(6)
MARK_UNIT, MARK_FINITE, MARK_INTERVAL = range(3)

BACKEND = "python"

TWO_PI = 2.0 * math.pi
_SEARCH_PAD = 1.0 + 1e-9

# Gauss-Kronrod 7/15 (QUADPACK qk15)
_XGK = (
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
)
_WGK = (
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
)
_WG = (
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
)
_MAX_DEPTH = 48


def lens_area(r, R):
    if r >= R:
        return 0.0
    v = 0.5 * (R * R * math.acos(r / R) - r * math.sqrt(R * R - r * r))
    return v if v > 0.0 else 0.0


# ---------------------------------------------------------------------------
# uncovered area of a disc


def _ray_uncovered(t, R, qx, qy, qd2):
    ux = math.cos(t)
    uy = math.sin(t)
    R2 = R * R
    ivs = []
    for j in range(len(qx)):
        s = qx[j] * ux + qy[j] * uy
        perp2 = qd2[j] - s * s
        if perp2 >= R2:
            continue
        h = math.sqrt(R2 - perp2)
        lo = s - h
        hi = s + h
        if lo < 0.0:
            lo = 0.0
        if hi > R:
            hi = R
        if hi > lo:
            ivs.append((lo, hi))
    if not ivs:
        return 0.5 * R2
    ivs.sort()
    covered = 0.0
    cur_lo, cur_hi = ivs[0]
    for lo, hi in ivs[1:]:
        if lo > cur_hi:
            covered += 0.5 * (cur_hi * cur_hi - cur_lo * cur_lo)
            cur_lo, cur_hi = lo, hi
        elif hi > cur_hi:
            cur_hi = hi
    covered += 0.5 * (cur_hi * cur_hi - cur_lo * cur_lo)
    return 0.5 * R2 - covered


def _panel_integrand(u, mode, a, b, R, qx, qy, qd2):
    if mode == 0:
        return _ray_uncovered(u, R, qx, qy, qd2)
    w = b - a
    if mode == 1:
        t = a + w * u * u
    else:
        t = b - w * u * u
    return 2.0 * w * u * _ray_uncovered(t, R, qx, qy, qd2)


def _gk15(u0, u1, mode, a, b, R, qx, qy, qd2):
    c = 0.5 * (u0 + u1)
    h = 0.5 * (u1 - u0)
    fc = _panel_integrand(c, mode, a, b, R, qx, qy, qd2)
    resk = fc * _WGK[7]
    resg = fc * _WG[3]
    for j in range(7):
        dx = h * _XGK[j]
        f1 = _panel_integrand(c - dx, mode, a, b, R, qx, qy, qd2)
        f2 = _panel_integrand(c + dx, mode, a, b, R, qx, qy, qd2)
        resk += _WGK[j] * (f1 + f2)
        if j % 2 == 1:
            resg += _WG[j // 2] * (f1 + f2)
    return resk * h, abs((resk - resg) * h)


def _integrate_panel(a, b, kind_a, kind_b, tol, R, qx, qy, qd2):
    if kind_a and kind_b:
        m = 0.5 * (a + b)
        return _integrate_panel(a, m, 1, 0, 0.5 * tol, R, qx, qy, qd2) + _integrate_panel(
            m, b, 0, 1, 0.5 * tol, R, qx, qy, qd2
        )
    if kind_a:
        mode, u0, u1 = 1, 0.0, 1.0
    elif kind_b:
        mode, u0, u1 = 2, 0.0, 1.0
    else:
        mode, u0, u1 = 0, a, b
    total = 0.0
    stack = [(u0, u1, tol, 0)]
    while stack:
        s0, s1, tl, depth = stack.pop()
        val, err = _gk15(s0, s1, mode, a, b, R, qx, qy, qd2)
        if err <= tl or depth >= _MAX_DEPTH:
            total += val
        else:
            sm = 0.5 * (s0 + s1)
            stack.append((sm, s1, 0.5 * tl, depth + 1))
            stack.append((s0, sm, 0.5 * tl, depth + 1))
    return total


def added_disc_area(cx, cy, R, ex, ey, tol):
    R2 = R * R
    four_R2 = 4.0 * R2
    qx, qy, qd2 = [], [], []
    for j in range(len(ex)):
        dx = ex[j] - cx
        dy = ey[j] - cy
        d2 = dx * dx + dy * dy
        if d2 >= four_R2:
            continue
        if d2 == 0.0:
            return 0.0
        qx.append(dx)
        qy.append(dy)
        qd2.append(d2)
    if not qx:
        return math.pi * R2
    n = len(qx)
    bps = []
    for j in range(n):
        d = math.sqrt(qd2[j])
        phi = math.atan2(qy[j], qx[j])
        a = math.acos(min(1.0, d / (2.0 * R)))
        bps.append((phi - a, 0))
        bps.append((phi + a, 0))
        if d >= R and qd2[j] - R2 < R2:
            s = math.asin(min(1.0, R / d))
            bps.append((phi - s, 1))
            bps.append((phi + s, 1))
    for j in range(n):
        for l in range(j + 1, n):
            dx = qx[l] - qx[j]
            dy = qy[l] - qy[j]
            djl2 = dx * dx + dy * dy
            if djl2 >= four_R2 or djl2 == 0.0:
                continue
            djl = math.sqrt(djl2)
            hh = math.sqrt(max(0.0, R2 - 0.25 * djl2))
            mx = qx[j] + 0.5 * dx
            my = qy[j] + 0.5 * dy
            px = -dy / djl * hh
            py = dx / djl * hh
            for sgn in (1.0, -1.0):
                ix = mx + sgn * px
                iy = my + sgn * py
                if ix * ix + iy * iy < R2:
                    bps.append((math.atan2(iy, ix), 0))
    bps = sorted(((t % TWO_PI), kind) for t, kind in bps)
    merged = []
    for t, kind in bps:
        if merged and t - merged[-1][0] <= 1e-14:
            if kind > merged[-1][1]:
                merged[-1] = (merged[-1][0], kind)
            continue
        merged.append((t, kind))
    if len(merged) > 1 and merged[0][0] + TWO_PI - merged[-1][0] <= 1e-14:
        t0, k0 = merged.pop()
        merged[0] = (merged[0][0], max(merged[0][1], k0))
    tol_abs = tol * math.pi * R2
    total = 0.0
    nb = len(merged)
    for i in range(nb):
        a, ka = merged[i]
        if i + 1 < nb:
            b, kb = merged[i + 1]
        else:
            b, kb = merged[0][0] + TWO_PI, merged[0][1]
        if b - a <= 0.0:
            continue
        total += _integrate_panel(a, b, ka, kb, tol_abs * (b - a) / TWO_PI, R, qx, qy, qd2)
    if total < 0.0:
        total = 0.0
    return total


# ---------------------------------------------------------------------------
# local statistics


def _band_col(spec, m1, m2, d):
    nb = spec.nbands[m1, m2]
    if nb == 0:
        return -1
    e = spec.edges[m1, m2]
    if d < e[0]:
        return -1
    for b in range(nb):
        if d < e[b + 1]:
            return int(spec.band_col[m1, m2, b])
    return -1


def _mark_index(spec, m):
    if spec.nmarks > 1 or spec.family in (MULTI_STRAUSS, KNN):
        return int(m) - 1
    return 0


def _kth_key(ax, ay, cx, cy, skip, dmax, k):
    """k-th smallest (d2, x, y, idx) among candidates within dmax of (ax, ay)."""
    keys = []
    for j in range(len(cx)):
        if j == skip:
            continue
        dx = ax - cx[j]
        dy = ay - cy[j]
        d2 = dx * dx + dy * dy
        if math.sqrt(d2) < dmax:
            keys.append((d2, cx[j], cy[j], j))
    if len(keys) < k:
        return None
    keys.sort()
    return keys[k - 1]


def local_stats(spec, qx, qy, qm, cx, cy, cm):
    """Local statistics of a point at ``(qx, qy)`` with mark ``qm``.

    ``cx, cy, cm`` hold the configuration the point is added to; it must
    contain every point within ``spec.search`` of the query.
    Returns ``(stats, hard)`` where ``hard`` flags a hard-core violation.
    """
    fam = spec.family
    out = np.zeros(spec.p)
    hard = False
    n = len(cx)
    if fam == OVERLAP:
        out[0] = 1.0
        R = spec.R
        acc = 0.0
        for j in range(n):
            dx = qx - cx[j]
            dy = qy - cy[j]
            d = math.sqrt(dx * dx + dy * dy)
            if d < R:
                acc += lens_area(d, R)
        out[1] = acc
    elif fam == MULTI_STRAUSS:
        m = _mark_index(spec, qm)
        out[spec.count_col[m]] = 1.0
        for j in range(n):
            dx = qx - cx[j]
            dy = qy - cy[j]
            d = math.sqrt(dx * dx + dy * dy)
            m2 = int(cm[j]) - 1
            delta = spec.hard[m, m2]
            if delta > 0.0 and d < delta:
                hard = True
            col = _band_col(spec, m, m2, d)
            if col >= 0:
                out[col] += 1.0
    elif fam == KNN:
        m = _mark_index(spec, qm)
        out[spec.count_col[m]] = 1.0
        dmax = spec.dmax
        k = spec.k
        near = []
        for j in range(n):
            dx = qx - cx[j]
            dy = qy - cy[j]
            d2 = dx * dx + dy * dy
            if math.sqrt(d2) < dmax:
                near.append((d2, cx[j], cy[j], j))
        near.sort()
        for d2, _, _, j in near[:k]:
            col = _band_col(spec, m, int(cm[j]) - 1, math.sqrt(d2))
            if col >= 0:
                out[col] += 1.0
        for d2, ax, ay, a in near:
            ma = int(cm[a]) - 1
            kth = _kth_key(ax, ay, cx, cy, a, dmax, k)
            # x enters a's list iff it precedes a's current k-th neighbour
            if kth is None or (d2, qx, qy) < kth[:3]:
                col = _band_col(spec, ma, m, math.sqrt(d2))
                if col >= 0:
                    out[col] += 1.0
                if kth is not None:
                    z = kth[3]
                    col = _band_col(spec, ma, int(cm[z]) - 1, math.sqrt(kth[0]))
                    if col >= 0:
                        out[col] -= 1.0
    elif fam == STRAUSS_DISC:
        out[0] = 1.0
        acc = 0
        for j in range(n):
            dx = qx - cx[j]
            dy = qy - cy[j]
            d = math.sqrt(dx * dx + dy * dy)
            if d <= qm + cm[j]:
                acc += 1
        out[1] = acc
    elif fam == GEYER:
        out[0] = 1.0
        R = spec.R
        nx, ny = [], []
        for j in range(n):
            dx = qx - cx[j]
            dy = qy - cy[j]
            if math.sqrt(dx * dx + dy * dy) <= R:
                nx.append(cx[j])
                ny.append(cy[j])
        t = 0
        for a in range(len(nx)):
            for b in range(a + 1, len(nx)):
                dx = nx[a] - nx[b]
                dy = ny[a] - ny[b]
                if math.sqrt(dx * dx + dy * dy) <= R:
                    t += 1
        out[1] = len(nx)
        out[2] = t
    elif fam == AREA:
        out[0] = 1.0
        out[1] = added_disc_area(qx, qy, spec.R, cx, cy, spec.area_tol)
    else:
        raise ValueError(f"unknown family code {fam}")
    return out, hard


def node_statistics(spec, px, py, pm, qx, qy, qm, exclude):
    """Local statistics at many query points against a fixed pattern.

    ``exclude[i]`` is the pattern index of query ``i`` (leave-one-out) or -1.
    """
    nq = len(qx)
    stats = np.zeros((nq, spec.p))
    hard = np.zeros(nq, dtype=np.uint8)
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    pm = np.asarray(pm, dtype=float)
    tree = cKDTree(np.column_stack([px, py])) if len(px) and spec.search > 0 else None
    radius = spec.search * _SEARCH_PAD
    for i in range(nq):
        if tree is None:
            idx = []
        else:
            idx = tree.query_ball_point((qx[i], qy[i]), radius)
            if exclude[i] >= 0:
                idx = [j for j in idx if j != exclude[i]]
        idx = sorted(idx)
        s, h = local_stats(
            spec, float(qx[i]), float(qy[i]), float(qm[i]), px[idx].tolist(), py[idx].tolist(), pm[idx].tolist()
        )
        stats[i] = s
        hard[i] = h
    return stats, hard


# ---------------------------------------------------------------------------
# Metropolis-Hastings birth / death / move chain


def _energy(spec, theta, qx, qy, qm, px, py, pm, n, skip):
    cx, cy, cm = [], [], []
    search = spec.search * _SEARCH_PAD
    for j in range(n):
        if j == skip:
            continue
        dx = qx - px[j]
        dy = qy - py[j]
        if dx * dx + dy * dy <= search * search:
            cx.append(px[j])
            cy.append(py[j])
            cm.append(pm[j])
    s, hard = local_stats(spec, qx, qy, qm, cx, cy, cm)
    if hard:
        return math.inf
    V = 0.0
    for j in range(len(s)):
        V += theta[j] * s[j]
    return V


def _draw_mark(kind, param, u):
    if kind == MARK_FINITE:
        m = int(u * param)
        if m >= param:
            m = int(param) - 1
        return float(m + 1)
    if kind == MARK_INTERVAL:
        return u * param
    return 0.0


def run_chain(spec, theta, window, mark_kind, mark_param, px, py, pm, n, uniforms, probs, counters):
    """Advance the chain in place over ``len(uniforms)`` steps; returns the new size.

    ``px, py, pm`` are buffers of capacity >= n + len(uniforms); ``counters``
    is an int array ``[proposed_b, accepted_b, proposed_d, accepted_d,
    proposed_m, accepted_m]`` updated in place.
    """
    xmin, xmax, ymin, ymax = window
    w = xmax - xmin
    h = ymax - ymin
    log_area = math.log(w * h)
    pb, pd, _ = probs
    log_bd = math.log(pd / pb) if pb > 0 and pd > 0 else 0.0
    theta = [float(t) for t in theta]
    for step in range(len(uniforms)):
        u = uniforms[step]
        if u[0] < pb:
            counters[0] += 1
            x = xmin + u[1] * w
            y = ymin + u[2] * h
            m = _draw_mark(mark_kind, mark_param, u[3])
            V = _energy(spec, theta, x, y, m, px, py, pm, n, -1)
            if V == math.inf:
                continue
            log_r = log_bd + log_area - math.log(n + 1) - V
            if u[5] <= 0.0 or math.log(u[5]) < log_r:
                px[n] = x
                py[n] = y
                pm[n] = m
                n += 1
                counters[1] += 1
        elif u[0] < pb + pd:
            counters[2] += 1
            if n == 0:
                continue
            i = int(u[4] * n)
            if i >= n:
                i = n - 1
            V = _energy(spec, theta, px[i], py[i], pm[i], px, py, pm, n, i)
            log_r = -log_bd + math.log(n) - log_area + V
            if u[5] <= 0.0 or math.log(u[5]) < log_r:
                n -= 1
                px[i] = px[n]
                py[i] = py[n]
                pm[i] = pm[n]
                counters[3] += 1
        else:
            counters[4] += 1
            if n == 0:
                continue
            i = int(u[4] * n)
            if i >= n:
                i = n - 1
            x = xmin + u[1] * w
            y = ymin + u[2] * h
            m = _draw_mark(mark_kind, mark_param, u[3])
            V_new = _energy(spec, theta, x, y, m, px, py, pm, n, i)
            if V_new == math.inf:
                continue
            V_old = _energy(spec, theta, px[i], py[i], pm[i], px, py, pm, n, i)
            log_r = V_old - V_new
            if u[5] <= 0.0 or math.log(u[5]) < log_r:
                px[i] = x
                py[i] = y
                pm[i] = m
                counters[5] += 1
    return n
