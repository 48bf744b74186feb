"""Pure-Python trajectory kernel; same algorithm and signature as ``_kernels.pyx``.

Potentials are piecewise quintic tables: cell ``j`` of a table covers
``[z0 + j h, z0 + (j + 1) h]`` and holds six coefficients of the polynomial in
the normalised coordinate ``x = (z - z_j) / h``. A time-dependent potential is
a stack of tables (waypoints) blended linearly in time.

``params`` layout (float64)::

    0 ma   1 mb   2 qa   3 qb   4 kc   5 za_lo   6 za_hi   7 zb_lo   8 zb_hi
    9 min_sep   10 eint_ref   11 dt

``state`` is ``[za, va, zb, vb, t]`` and is updated in place.
``track`` receives ``[min E_a, time of min]``.

Status: 0 ok, 1 collision, 2 particle a left its bounds, 3 particle b left its bounds.
"""

STATUS_OK = 0
STATUS_COLLISION = 1
STATUS_ESCAPE_A = 2
STATUS_ESCAPE_B = 3


def _locate(times, t, k):
    K = len(times)
    if K == 1:
        return 0, 0.0
    while k > 0 and t < times[k]:
        k -= 1
    while k < K - 2 and t > times[k + 1]:
        k += 1
    w = (t - times[k]) / (times[k + 1] - times[k])
    if w < 0.0:
        w = 0.0
    elif w > 1.0:
        w = 1.0
    return k, w


def _poly(c, z0, h, ncell, z):
    """Value and derivative of one table at z; cell clamped to the table."""
    x = (z - z0) / h
    j = int(x) if x >= 0 else -1
    if j < 0:
        j = 0
    elif j >= ncell:
        j = ncell - 1
    x -= j
    c0, c1, c2, c3, c4, c5 = c[j]
    val = c0 + x * (c1 + x * (c2 + x * (c3 + x * (c4 + x * c5))))
    der = c1 + x * (2 * c2 + x * (3 * c3 + x * (4 * c4 + x * 5 * c5)))
    return val, der / h


def _eval(table, z0, h, ncell, k, w, z):
    v0, d0 = _poly(table[k], z0, h, ncell, z)
    if w == 0.0:
        return v0, d0
    v1, d1 = _poly(table[k + 1], z0, h, ncell, z)
    return v0 + w * (v1 - v0), d0 + w * (d1 - d0)


def integrate(ca, za_grid0, ha, cb, zb_grid0, hb, times, ref_a, ref_b, state,
              n_steps, params, weights, record_every, records, track):
    ca = ca.tolist()
    cb = cb.tolist()
    times = list(times)
    ref_a = list(ref_a)
    ref_b = list(ref_b)
    weights = list(weights)
    nca = len(ca[0])
    ncb = len(cb[0])
    ma, mb, qa, qb, kc, za_lo, za_hi, zb_lo, zb_hi, min_sep, eint_ref, dt = \
        [float(p) for p in params[:12]]
    kab = kc * qa * qb
    za, va, zb, vb, t = [float(s) for s in state[:5]]
    max_records = records.shape[0]
    K = len(times)

    k = 0
    k, w = _locate(times, t, k)
    pa, da = _eval(ca, za_grid0, ha, nca, k, w, za)
    pb, db = _eval(cb, zb_grid0, hb, ncb, k, w, zb)
    sep = za - zb
    r = abs(sep)
    if r < min_sep:
        track[0] = float("nan")
        track[1] = t
        return STATUS_COLLISION, 0, 0
    fc = kab * sep / (r * r * r)
    fa = -qa * da + fc
    fb = -qb * db - fc

    def energies():
        if K == 1:
            ra, rb = ref_a[0], ref_b[0]
        else:
            ra = ref_a[k] + w * (ref_a[k + 1] - ref_a[k])
            rb = ref_b[k] + w * (ref_b[k + 1] - ref_b[k])
        ea = 0.5 * ma * va * va + qa * (pa - ra)
        eb = 0.5 * mb * vb * vb + qb * (pb - rb)
        ei = kab / r - eint_ref
        return ea, eb, ei

    ea, eb, ei = energies()
    min_ea, t_min = ea, t
    n_rec = 0
    if record_every > 0 and n_rec < max_records:
        records[n_rec] = (t, za, va, ea, zb, vb, eb, ei, ea + eb + ei)
        n_rec += 1

    status = STATUS_OK
    step = 0
    while step < n_steps:
        for wj in weights:
            h_dt = wj * dt
            va += 0.5 * h_dt * fa / ma
            vb += 0.5 * h_dt * fb / mb
            za += h_dt * va
            zb += h_dt * vb
            t += h_dt
            if not za_lo <= za <= za_hi:
                status = STATUS_ESCAPE_A
                break
            if not zb_lo <= zb <= zb_hi:
                status = STATUS_ESCAPE_B
                break
            sep = za - zb
            r = abs(sep)
            if r < min_sep:
                status = STATUS_COLLISION
                break
            k, w = _locate(times, t, k)
            pa, da = _eval(ca, za_grid0, ha, nca, k, w, za)
            pb, db = _eval(cb, zb_grid0, hb, ncb, k, w, zb)
            fc = kab * sep / (r * r * r)
            fa = -qa * da + fc
            fb = -qb * db - fc
            va += 0.5 * h_dt * fa / ma
            vb += 0.5 * h_dt * fb / mb
        if status != STATUS_OK:
            break
        step += 1
        ea, eb, ei = energies()
        if ea < min_ea:
            min_ea, t_min = ea, t
        if record_every > 0 and step % record_every == 0 and n_rec < max_records:
            records[n_rec] = (t, za, va, ea, zb, vb, eb, ei, ea + eb + ei)
            n_rec += 1

    state[0] = za
    state[1] = va
    state[2] = zb
    state[3] = vb
    state[4] = t
    track[0] = min_ea
    track[1] = t_min
    return status, step, n_rec
