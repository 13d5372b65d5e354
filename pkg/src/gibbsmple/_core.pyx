# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: local statistics at quadrature nodes, uncovered disc
area, and the birth/death/move Metropolis-Hastings chain.

Mirrors ``_pycore`` operation for operation so both backends agree to the
last bit on the same inputs (candidate lists are visited in index order).
"""

from libc.math cimport sqrt, acos, asin, atan2, cos, sin, floor, ceil, fabs, log, fmod, copysign, INFINITY
from libc.stdlib cimport malloc, free, qsort

import numpy as np

BACKEND = "cython"

cdef enum:
    OVERLAP = 0
    MULTI_STRAUSS = 1
    KNN = 2
    STRAUSS_DISC = 3
    GEYER = 4
    AREA = 5
    MARK_UNIT = 0
    MARK_FINITE = 1
    MARK_INTERVAL = 2
    MAX_DEPTH = 48
    STACK_SIZE = 128

cdef double PI = 3.141592653589793
cdef double TWO_PI = 2.0 * 3.141592653589793
cdef double SEARCH_PAD = 1.0 + 1e-9

cdef double XGK[8]
cdef double WGK[8]
cdef double WG[4]
XGK[:] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
]
WGK[:] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
]
WG[:] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
]


cdef struct Spec:
    int family
    int p
    int k
    int nmarks
    int maxb
    double R
    double mmax
    double search
    double dmax
    double area_tol
    const int* count_col
    const double* edges
    const int* nbands
    const int* band_col
    const double* hard


cdef struct Key:
    double d2
    double x
    double y
    int idx


cdef struct BP:
    double t
    int kind


cdef struct Ray:
    int n
    double R
    const double* qx
    const double* qy
    const double* qd2
    double* lo
    double* hi


cdef int _cmp_key(const void* pa, const void* pb) noexcept nogil:
    cdef const Key* a = <const Key*> pa
    cdef const Key* b = <const Key*> pb
    if a.d2 < b.d2:
        return -1
    if a.d2 > b.d2:
        return 1
    if a.x < b.x:
        return -1
    if a.x > b.x:
        return 1
    if a.y < b.y:
        return -1
    if a.y > b.y:
        return 1
    if a.idx < b.idx:
        return -1
    if a.idx > b.idx:
        return 1
    return 0


cdef inline bint _key_less(double d2a, double xa, double ya, double d2b, double xb, double yb) noexcept nogil:
    if d2a != d2b:
        return d2a < d2b
    if xa != xb:
        return xa < xb
    return ya < yb


cdef int _cmp_bp(const void* pa, const void* pb) noexcept nogil:
    cdef const BP* a = <const BP*> pa
    cdef const BP* b = <const BP*> pb
    if a.t < b.t:
        return -1
    if a.t > b.t:
        return 1
    if a.kind < b.kind:
        return -1
    if a.kind > b.kind:
        return 1
    return 0


cdef int _cmp_int(const void* pa, const void* pb) noexcept nogil:
    cdef int a = (<const int*> pa)[0]
    cdef int b = (<const int*> pb)[0]
    return (a > b) - (a < b)


cdef inline double _pymod(double t, double w) noexcept nogil:
    # Python's float % for w > 0
    cdef double r = fmod(t, w)
    if r != 0.0:
        if r < 0.0:
            r += w
    else:
        r = copysign(0.0, w)
    return r


cdef inline double _lens(double r, double R) noexcept nogil:
    if r >= R:
        return 0.0
    cdef double v = 0.5 * (R * R * acos(r / R) - r * sqrt(R * R - r * r))
    return v if v > 0.0 else 0.0


def lens_area(double r, double R):
    return _lens(r, R)


# ---------------------------------------------------------------------------
# uncovered area of a disc

cdef double _ray_uncovered(double t, Ray* ray) noexcept nogil:
    cdef double ux = cos(t)
    cdef double uy = sin(t)
    cdef double R = ray.R
    cdef double R2 = R * R
    cdef int j, m = 0, i
    cdef double s, perp2, h, lo, hi, covered, cur_lo, cur_hi
    for j in range(ray.n):
        s = ray.qx[j] * ux + ray.qy[j] * uy
        perp2 = ray.qd2[j] - s * s
        if perp2 >= R2:
            continue
        h = sqrt(R2 - perp2)
        lo = s - h
        hi = s + h
        if lo < 0.0:
            lo = 0.0
        if hi > R:
            hi = R
        if hi > lo:
            # insertion sort on (lo, hi), same order as Python's tuple sort
            i = m
            while i > 0 and (ray.lo[i - 1] > lo or (ray.lo[i - 1] == lo and ray.hi[i - 1] > hi)):
                ray.lo[i] = ray.lo[i - 1]
                ray.hi[i] = ray.hi[i - 1]
                i -= 1
            ray.lo[i] = lo
            ray.hi[i] = hi
            m += 1
    if m == 0:
        return 0.5 * R2
    covered = 0.0
    cur_lo = ray.lo[0]
    cur_hi = ray.hi[0]
    for i in range(1, m):
        lo = ray.lo[i]
        hi = ray.hi[i]
        if lo > cur_hi:
            covered += 0.5 * (cur_hi * cur_hi - cur_lo * cur_lo)
            cur_lo = lo
            cur_hi = hi
        elif hi > cur_hi:
            cur_hi = hi
    covered += 0.5 * (cur_hi * cur_hi - cur_lo * cur_lo)
    return 0.5 * R2 - covered


cdef inline double _panel_integrand(double u, int mode, double a, double b, Ray* ray) noexcept nogil:
    cdef double w, t
    if mode == 0:
        return _ray_uncovered(u, ray)
    w = b - a
    if mode == 1:
        t = a + w * u * u
    else:
        t = b - w * u * u
    return 2.0 * w * u * _ray_uncovered(t, ray)


cdef double _gk15(double u0, double u1, int mode, double a, double b, Ray* ray, double* err) noexcept nogil:
    cdef double c = 0.5 * (u0 + u1)
    cdef double h = 0.5 * (u1 - u0)
    cdef double fc = _panel_integrand(c, mode, a, b, ray)
    cdef double resk = fc * WGK[7]
    cdef double resg = fc * WG[3]
    cdef double dx, f1, f2
    cdef int j
    for j in range(7):
        dx = h * XGK[j]
        f1 = _panel_integrand(c - dx, mode, a, b, ray)
        f2 = _panel_integrand(c + dx, mode, a, b, ray)
        resk += WGK[j] * (f1 + f2)
        if j % 2 == 1:
            resg += WG[j // 2] * (f1 + f2)
    err[0] = fabs((resk - resg) * h)
    return resk * h


cdef double _integrate_panel(double a, double b, int kind_a, int kind_b, double tol, Ray* ray) noexcept nogil:
    cdef double m
    if kind_a and kind_b:
        m = 0.5 * (a + b)
        return _integrate_panel(a, m, 1, 0, 0.5 * tol, ray) + _integrate_panel(m, b, 0, 1, 0.5 * tol, ray)
    cdef int mode
    cdef double u0, u1
    if kind_a:
        mode = 1
        u0 = 0.0
        u1 = 1.0
    elif kind_b:
        mode = 2
        u0 = 0.0
        u1 = 1.0
    else:
        mode = 0
        u0 = a
        u1 = b
    cdef double s0[STACK_SIZE]
    cdef double s1[STACK_SIZE]
    cdef double stl[STACK_SIZE]
    cdef int sdepth[STACK_SIZE]
    cdef int top = 0
    cdef double total = 0.0, val, err, sm, tl, x0, x1
    cdef int depth
    s0[0] = u0
    s1[0] = u1
    stl[0] = tol
    sdepth[0] = 0
    top = 1
    while top > 0:
        top -= 1
        x0 = s0[top]
        x1 = s1[top]
        tl = stl[top]
        depth = sdepth[top]
        val = _gk15(x0, x1, mode, a, b, ray, &err)
        if err <= tl or depth >= MAX_DEPTH or top + 2 > STACK_SIZE:
            total += val
        else:
            sm = 0.5 * (x0 + x1)
            s0[top] = sm
            s1[top] = x1
            stl[top] = 0.5 * tl
            sdepth[top] = depth + 1
            top += 1
            s0[top] = x0
            s1[top] = sm
            stl[top] = 0.5 * tl
            sdepth[top] = depth + 1
            top += 1
    return total


cdef double _added_area(double cx, double cy, double R, const double* ex, const double* ey, int n, double tol) noexcept nogil:
    cdef double R2 = R * R
    cdef double four_R2 = 4.0 * R2
    cdef int j, l, m = 0, nbp = 0, i, nmerged
    cdef double dx, dy, d2, d, phi, a, s, djl2, djl, hh, mx, my, ppx, ppy, ix, iy, sgn
    cdef double *qx
    cdef double *qy
    cdef double *qd2
    cdef double *buf
    cdef BP* bps
    cdef Ray ray
    cdef double total, tol_abs, ta, tb
    cdef int ka, kb
    if n == 0:
        return PI * R2
    buf = <double*> malloc(5 * n * sizeof(double))
    qx = buf
    qy = buf + n
    qd2 = buf + 2 * n
    for j in range(n):
        dx = ex[j] - cx
        dy = ey[j] - cy
        d2 = dx * dx + dy * dy
        if d2 >= four_R2:
            continue
        if d2 == 0.0:
            free(buf)
            return 0.0
        qx[m] = dx
        qy[m] = dy
        qd2[m] = d2
        m += 1
    if m == 0:
        free(buf)
        return PI * R2
    bps = <BP*> malloc((4 * m + 2 * m * m + 1) * sizeof(BP))
    for j in range(m):
        d = sqrt(qd2[j])
        phi = atan2(qy[j], qx[j])
        a = acos(min(1.0, d / (2.0 * R)))
        bps[nbp].t = phi - a
        bps[nbp].kind = 0
        nbp += 1
        bps[nbp].t = phi + a
        bps[nbp].kind = 0
        nbp += 1
        if d >= R and qd2[j] - R2 < R2:
            s = asin(min(1.0, R / d))
            bps[nbp].t = phi - s
            bps[nbp].kind = 1
            nbp += 1
            bps[nbp].t = phi + s
            bps[nbp].kind = 1
            nbp += 1
    for j in range(m):
        for l in range(j + 1, m):
            dx = qx[l] - qx[j]
            dy = qy[l] - qy[j]
            djl2 = dx * dx + dy * dy
            if djl2 >= four_R2 or djl2 == 0.0:
                continue
            djl = sqrt(djl2)
            hh = sqrt(max(0.0, R2 - 0.25 * djl2))
            mx = qx[j] + 0.5 * dx
            my = qy[j] + 0.5 * dy
            ppx = -dy / djl * hh
            ppy = dx / djl * hh
            for i in range(2):
                sgn = 1.0 if i == 0 else -1.0
                ix = mx + sgn * ppx
                iy = my + sgn * ppy
                if ix * ix + iy * iy < R2:
                    bps[nbp].t = atan2(iy, ix)
                    bps[nbp].kind = 0
                    nbp += 1
    for i in range(nbp):
        bps[i].t = _pymod(bps[i].t, TWO_PI)
    qsort(bps, nbp, sizeof(BP), _cmp_bp)
    nmerged = 0
    for i in range(nbp):
        if nmerged > 0 and bps[i].t - bps[nmerged - 1].t <= 1e-14:
            if bps[i].kind > bps[nmerged - 1].kind:
                bps[nmerged - 1].kind = bps[i].kind
            continue
        bps[nmerged] = bps[i]
        nmerged += 1
    if nmerged > 1 and bps[0].t + TWO_PI - bps[nmerged - 1].t <= 1e-14:
        nmerged -= 1
        if bps[nmerged].kind > bps[0].kind:
            bps[0].kind = bps[nmerged].kind
    ray.n = m
    ray.R = R
    ray.qx = qx
    ray.qy = qy
    ray.qd2 = qd2
    ray.lo = buf + 3 * n
    ray.hi = buf + 4 * n
    tol_abs = tol * PI * R2
    total = 0.0
    for i in range(nmerged):
        ta = bps[i].t
        ka = bps[i].kind
        if i + 1 < nmerged:
            tb = bps[i + 1].t
            kb = bps[i + 1].kind
        else:
            tb = bps[0].t + TWO_PI
            kb = bps[0].kind
        if tb - ta <= 0.0:
            continue
        total += _integrate_panel(ta, tb, ka, kb, tol_abs * (tb - ta) / TWO_PI, &ray)
    free(bps)
    free(buf)
    if total < 0.0:
        total = 0.0
    return total


def added_disc_area(double cx, double cy, double R, ex, ey, double tol):
    cdef const double[::1] vx = np.ascontiguousarray(ex, dtype=np.float64)
    cdef const double[::1] vy = np.ascontiguousarray(ey, dtype=np.float64)
    cdef int n = vx.shape[0]
    if n == 0:
        return PI * R * R
    cdef double res
    with nogil:
        res = _added_area(cx, cy, R, &vx[0], &vy[0], n, tol)
    return res


# ---------------------------------------------------------------------------
# local statistics

cdef inline int _band_col(const Spec* s, int m1, int m2, double d) noexcept nogil:
    cdef int pair = m1 * s.nmarks + m2
    cdef int nb = s.nbands[pair]
    cdef const double* e
    cdef int b
    if nb == 0:
        return -1
    e = s.edges + pair * (s.maxb + 1)
    if d < e[0]:
        return -1
    for b in range(nb):
        if d < e[b + 1]:
            return s.band_col[pair * s.maxb + b]
    return -1


cdef int _kth_key(double ax, double ay, const double* cx, const double* cy, int n, int skip,
                  double dmax, int k, Key* best) noexcept nogil:
    """Fill best[0..k) with the k smallest keys within dmax of a; return how many."""
    cdef int cnt = 0, j, i
    cdef double dx, dy, d2
    for j in range(n):
        if j == skip:
            continue
        dx = ax - cx[j]
        dy = ay - cy[j]
        d2 = dx * dx + dy * dy
        if not (sqrt(d2) < dmax):
            continue
        if cnt == k and not _key_less(d2, cx[j], cy[j], best[k - 1].d2, best[k - 1].x, best[k - 1].y):
            continue
        i = cnt if cnt < k else k - 1
        while i > 0 and _key_less(d2, cx[j], cy[j], best[i - 1].d2, best[i - 1].x, best[i - 1].y):
            best[i] = best[i - 1]
            i -= 1
        best[i].d2 = d2
        best[i].x = cx[j]
        best[i].y = cy[j]
        best[i].idx = j
        if cnt < k:
            cnt += 1
    return cnt


cdef int _local(const Spec* s, double qx, double qy, double qm, const double* cx, const double* cy,
                const double* cm, int n, double* out) noexcept nogil:
    cdef int j, a, b, m, m2, col, cnt, t, nn
    cdef double dx, dy, d, d2, delta, acc, R
    cdef int hard = 0
    cdef Key* near
    cdef Key* best
    cdef double* nbx
    cdef double* nby
    for j in range(s.p):
        out[j] = 0.0
    if s.family == OVERLAP:
        out[0] = 1.0
        R = s.R
        acc = 0.0
        for j in range(n):
            dx = qx - cx[j]
            dy = qy - cy[j]
            d = sqrt(dx * dx + dy * dy)
            if d < R:
                acc += _lens(d, R)
        out[1] = acc
    elif s.family == MULTI_STRAUSS:
        m = <int> qm - 1
        out[s.count_col[m]] = 1.0
        for j in range(n):
            dx = qx - cx[j]
            dy = qy - cy[j]
            d = sqrt(dx * dx + dy * dy)
            m2 = <int> cm[j] - 1
            delta = s.hard[m * s.nmarks + m2]
            if delta > 0.0 and d < delta:
                hard = 1
            col = _band_col(s, m, m2, d)
            if col >= 0:
                out[col] += 1.0
    elif s.family == KNN:
        m = <int> qm - 1
        out[s.count_col[m]] = 1.0
        near = <Key*> malloc((n + 1) * sizeof(Key))
        best = <Key*> malloc((s.k + 1) * sizeof(Key))
        nn = 0
        for j in range(n):
            dx = qx - cx[j]
            dy = qy - cy[j]
            d2 = dx * dx + dy * dy
            if sqrt(d2) < s.dmax:
                near[nn].d2 = d2
                near[nn].x = cx[j]
                near[nn].y = cy[j]
                near[nn].idx = j
                nn += 1
        qsort(near, nn, sizeof(Key), _cmp_key)
        for j in range(min(nn, s.k)):
            col = _band_col(s, m, <int> cm[near[j].idx] - 1, sqrt(near[j].d2))
            if col >= 0:
                out[col] += 1.0
        for j in range(nn):
            a = near[j].idx
            cnt = _kth_key(near[j].x, near[j].y, cx, cy, n, a, s.dmax, s.k, best)
            if cnt < s.k or _key_less(near[j].d2, qx, qy, best[s.k - 1].d2, best[s.k - 1].x, best[s.k - 1].y):
                col = _band_col(s, <int> cm[a] - 1, m, sqrt(near[j].d2))
                if col >= 0:
                    out[col] += 1.0
                if cnt == s.k:
                    col = _band_col(s, <int> cm[a] - 1, <int> cm[best[s.k - 1].idx] - 1, sqrt(best[s.k - 1].d2))
                    if col >= 0:
                        out[col] -= 1.0
        free(best)
        free(near)
    elif s.family == STRAUSS_DISC:
        out[0] = 1.0
        cnt = 0
        for j in range(n):
            dx = qx - cx[j]
            dy = qy - cy[j]
            d = sqrt(dx * dx + dy * dy)
            if d <= qm + cm[j]:
                cnt += 1
        out[1] = cnt
    elif s.family == GEYER:
        out[0] = 1.0
        R = s.R
        nbx = <double*> malloc((2 * n + 1) * sizeof(double))
        nby = nbx + n
        nn = 0
        for j in range(n):
            dx = qx - cx[j]
            dy = qy - cy[j]
            if sqrt(dx * dx + dy * dy) <= R:
                nbx[nn] = cx[j]
                nby[nn] = cy[j]
                nn += 1
        t = 0
        for a in range(nn):
            for b in range(a + 1, nn):
                dx = nbx[a] - nbx[b]
                dy = nby[a] - nby[b]
                if sqrt(dx * dx + dy * dy) <= R:
                    t += 1
        out[1] = nn
        out[2] = t
        free(nbx)
    elif s.family == AREA:
        out[0] = 1.0
        out[1] = _added_area(qx, qy, s.R, cx, cy, n, s.area_tol)
    return hard


cdef class _SpecHolder:
    """Keeps the typed buffers behind a Spec alive."""
    cdef Spec spec
    cdef object keep
    cdef const int[::1] count_col
    cdef const double[::1] edges
    cdef const int[::1] nbands
    cdef const int[::1] band_col
    cdef const double[::1] hard

    def __init__(self, ks):
        self.count_col = np.ascontiguousarray(ks.count_col, dtype=np.intc).ravel()
        self.edges = np.ascontiguousarray(ks.edges, dtype=np.float64).ravel()
        self.nbands = np.ascontiguousarray(ks.nbands, dtype=np.intc).ravel()
        self.band_col = np.ascontiguousarray(ks.band_col, dtype=np.intc).ravel()
        self.hard = np.ascontiguousarray(ks.hard, dtype=np.float64).ravel()
        self.spec.family = ks.family
        self.spec.p = ks.p
        self.spec.k = ks.k
        self.spec.nmarks = ks.nmarks
        self.spec.maxb = ks.band_col.shape[2]
        self.spec.R = ks.R
        self.spec.mmax = ks.mmax
        self.spec.search = ks.search
        self.spec.dmax = ks.dmax
        self.spec.area_tol = ks.area_tol
        self.spec.count_col = &self.count_col[0]
        self.spec.edges = &self.edges[0]
        self.spec.nbands = &self.nbands[0]
        self.spec.band_col = &self.band_col[0]
        self.spec.hard = &self.hard[0]


def local_stats(ks, double qx, double qy, double qm, cx, cy, cm):
    cdef _SpecHolder h = _SpecHolder(ks)
    cdef const double[::1] vx = np.ascontiguousarray(cx, dtype=np.float64)
    cdef const double[::1] vy = np.ascontiguousarray(cy, dtype=np.float64)
    cdef const double[::1] vm = np.ascontiguousarray(cm, dtype=np.float64)
    cdef int n = vx.shape[0]
    out = np.zeros(ks.p)
    cdef double[::1] vo = out
    cdef double dummy = 0.0
    cdef const double* px = &vx[0] if n > 0 else &dummy
    cdef const double* py = &vy[0] if n > 0 else &dummy
    cdef const double* pm = &vm[0] if n > 0 else &dummy
    cdef int hard
    with nogil:
        hard = _local(&h.spec, qx, qy, qm, px, py, pm, n, &vo[0])
    return out, bool(hard)


def node_statistics(ks, px, py, pm, qx, qy, qm, exclude):
    cdef _SpecHolder h = _SpecHolder(ks)
    cdef const double[::1] vpx = np.ascontiguousarray(px, dtype=np.float64)
    cdef const double[::1] vpy = np.ascontiguousarray(py, dtype=np.float64)
    cdef const double[::1] vpm = np.ascontiguousarray(pm, dtype=np.float64)
    cdef const double[::1] vqx = np.ascontiguousarray(qx, dtype=np.float64)
    cdef const double[::1] vqy = np.ascontiguousarray(qy, dtype=np.float64)
    cdef const double[::1] vqm = np.ascontiguousarray(qm, dtype=np.float64)
    cdef const long[::1] vex = np.ascontiguousarray(exclude, dtype=np.int_)
    cdef int n = vpx.shape[0]
    cdef int nq = vqx.shape[0]
    cdef int p = ks.p
    stats = np.zeros((nq, p))
    hardarr = np.zeros(nq, dtype=np.uint8)
    cdef double[:, ::1] vs = stats
    cdef unsigned char[::1] vh = hardarr
    if nq == 0:
        return stats, hardarr
    cdef double search = ks.search * SEARCH_PAD
    cdef double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0, cs = 1.0, f, dx, dy
    cdef int gx = 1, gy = 1, r = 1, i, j, c, ix, iy, qcx, qcy, lo_x, hi_x, lo_y, hi_y, nc, e
    cdef int* cell_of = NULL
    cdef int* start = NULL
    cdef int* order = NULL
    cdef int* cand = NULL
    cdef double* cx = NULL
    cdef double* cy = NULL
    cdef double* cm = NULL
    cdef double* outbuf = NULL
    cdef bint use_grid = n > 0 and search > 0.0
    with nogil:
        outbuf = <double*> malloc(p * sizeof(double))
        cx = <double*> malloc((3 * n + 1) * sizeof(double))
        cy = cx + n
        cm = cx + 2 * n
        cand = <int*> malloc((n + 1) * sizeof(int))
        if use_grid:
            x0 = vpx[0]
            x1 = vpx[0]
            y0 = vpy[0]
            y1 = vpy[0]
            for j in range(n):
                x0 = min(x0, vpx[j])
                x1 = max(x1, vpx[j])
                y0 = min(y0, vpy[j])
                y1 = max(y1, vpy[j])
            cs = search
            gx = <int> ((x1 - x0) / cs) + 1
            gy = <int> ((y1 - y0) / cs) + 1
            if <double> gx * <double> gy > 4.0 * n + 1024.0:
                f = sqrt(<double> gx * <double> gy / (4.0 * n + 1024.0))
                cs = cs * f
                gx = <int> ((x1 - x0) / cs) + 1
                gy = <int> ((y1 - y0) / cs) + 1
            r = <int> ceil(search / cs)
            cell_of = <int*> malloc(n * sizeof(int))
            start = <int*> malloc((gx * gy + 1) * sizeof(int))
            order = <int*> malloc(n * sizeof(int))
            for c in range(gx * gy + 1):
                start[c] = 0
            for j in range(n):
                ix = min(gx - 1, max(0, <int> ((vpx[j] - x0) / cs)))
                iy = min(gy - 1, max(0, <int> ((vpy[j] - y0) / cs)))
                cell_of[j] = ix * gy + iy
                start[cell_of[j] + 1] += 1
            for c in range(gx * gy):
                start[c + 1] += start[c]
            # stable counting sort: points of each cell stay in index order
            for j in range(n):
                c = cell_of[j]
                order[start[c]] = j
                start[c] += 1
            for c in range(gx * gy, 0, -1):
                start[c] = start[c - 1]
            start[0] = 0
        for i in range(nq):
            nc = 0
            if use_grid:
                qcx = <int> floor((vqx[i] - x0) / cs)
                qcy = <int> floor((vqy[i] - y0) / cs)
                lo_x = max(0, qcx - r)
                hi_x = min(gx - 1, qcx + r)
                lo_y = max(0, qcy - r)
                hi_y = min(gy - 1, qcy + r)
                for ix in range(lo_x, hi_x + 1):
                    for iy in range(lo_y, hi_y + 1):
                        c = ix * gy + iy
                        for e in range(start[c], start[c + 1]):
                            j = order[e]
                            if j == vex[i]:
                                continue
                            dx = vqx[i] - vpx[j]
                            dy = vqy[i] - vpy[j]
                            if sqrt(dx * dx + dy * dy) <= search:
                                cand[nc] = j
                                nc += 1
                qsort(cand, nc, sizeof(int), _cmp_int)
                for e in range(nc):
                    cx[e] = vpx[cand[e]]
                    cy[e] = vpy[cand[e]]
                    cm[e] = vpm[cand[e]]
            vh[i] = _local(&h.spec, vqx[i], vqy[i], vqm[i], cx, cy, cm, nc, outbuf)
            for j in range(p):
                vs[i, j] = outbuf[j]
        free(outbuf)
        free(cx)
        free(cand)
        if use_grid:
            free(cell_of)
            free(start)
            free(order)
    return stats, hardarr


# ---------------------------------------------------------------------------
# Metropolis-Hastings birth / death / move chain

cdef double _energy(const Spec* s, const double* theta, double qx, double qy, double qm,
                    const double* px, const double* py, const double* pm, int n, int skip,
                    double* cx, double* cy, double* cm, double* out) noexcept nogil:
    cdef double search = s.search * SEARCH_PAD
    cdef double s2 = search * search
    cdef int j, nc = 0
    cdef double dx, dy, V
    for j in range(n):
        if j == skip:
            continue
        dx = qx - px[j]
        dy = qy - py[j]
        if dx * dx + dy * dy <= s2:
            cx[nc] = px[j]
            cy[nc] = py[j]
            cm[nc] = pm[j]
            nc += 1
    if _local(s, qx, qy, qm, cx, cy, cm, nc, out):
        return INFINITY
    V = 0.0
    for j in range(s.p):
        V += theta[j] * out[j]
    return V


cdef inline double _draw_mark(int kind, double param, double u) noexcept nogil:
    cdef int m
    if kind == MARK_FINITE:
        m = <int> (u * param)
        if m >= param:
            m = <int> param - 1
        return <double> (m + 1)
    if kind == MARK_INTERVAL:
        return u * param
    return 0.0


def run_chain(ks, theta, window, int mark_kind, double mark_param, double[::1] px, double[::1] py,
              double[::1] pm, int n, const double[:, ::1] uniforms, probs, int[::1] counters):
    cdef _SpecHolder h = _SpecHolder(ks)
    cdef const double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef double xmin = window[0], xmax = window[1], ymin = window[2], ymax = window[3]
    cdef double w = xmax - xmin, hgt = ymax - ymin
    cdef double log_area = log(w * hgt)
    cdef double pb = probs[0], pd = probs[1]
    cdef double log_bd = log(pd / pb) if (pb > 0 and pd > 0) else 0.0
    cdef int steps = uniforms.shape[0]
    cdef int cap = px.shape[0]
    cdef int step, i
    cdef double x, y, m, V, V_new, V_old, log_r
    cdef double* cx
    cdef double* cy
    cdef double* cm
    cdef double* out
    if cap < n + steps:
        raise ValueError("state buffers too small for the number of steps")
    with nogil:
        cx = <double*> malloc((3 * cap + h.spec.p + 1) * sizeof(double))
        cy = cx + cap
        cm = cx + 2 * cap
        out = cx + 3 * cap
        for step in range(steps):
            if uniforms[step, 0] < pb:
                counters[0] += 1
                x = xmin + uniforms[step, 1] * w
                y = ymin + uniforms[step, 2] * hgt
                m = _draw_mark(mark_kind, mark_param, uniforms[step, 3])
                V = _energy(&h.spec, &th[0], x, y, m, &px[0], &py[0], &pm[0], n, -1, cx, cy, cm, out)
                if V == INFINITY:
                    continue
                log_r = log_bd + log_area - log(<double> (n + 1)) - V
                if uniforms[step, 5] <= 0.0 or log(uniforms[step, 5]) < log_r:
                    px[n] = x
                    py[n] = y
                    pm[n] = m
                    n += 1
                    counters[1] += 1
            elif uniforms[step, 0] < pb + pd:
                counters[2] += 1
                if n == 0:
                    continue
                i = <int> (uniforms[step, 4] * n)
                if i >= n:
                    i = n - 1
                V = _energy(&h.spec, &th[0], px[i], py[i], pm[i], &px[0], &py[0], &pm[0], n, i, cx, cy, cm, out)
                log_r = -log_bd + log(<double> n) - log_area + V
                if uniforms[step, 5] <= 0.0 or log(uniforms[step, 5]) < log_r:
                    n -= 1
                    px[i] = px[n]
                    py[i] = py[n]
                    pm[i] = pm[n]
                    counters[3] += 1
            else:
                counters[4] += 1
                if n == 0:
                    continue
                i = <int> (uniforms[step, 4] * n)
                if i >= n:
                    i = n - 1
                x = xmin + uniforms[step, 1] * w
                y = ymin + uniforms[step, 2] * hgt
                m = _draw_mark(mark_kind, mark_param, uniforms[step, 3])
                V_new = _energy(&h.spec, &th[0], x, y, m, &px[0], &py[0], &pm[0], n, i, cx, cy, cm, out)
                if V_new == INFINITY:
                    continue
                V_old = _energy(&h.spec, &th[0], px[i], py[i], pm[i], &px[0], &py[0], &pm[0], n, i, cx, cy, cm, out)
                log_r = V_old - V_new
                if uniforms[step, 5] <= 0.0 or log(uniforms[step, 5]) < log_r:
                    px[i] = x
                    py[i] = y
                    pm[i] = m
                    counters[5] += 1
        free(cx)
    return n
