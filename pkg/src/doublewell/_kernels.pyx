# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled trajectory kernel. See ``_kernels_py`` for the data layout."""

from libc.math cimport fabs, NAN

cdef int STATUS_OK = 0
cdef int STATUS_COLLISION = 1
cdef int STATUS_ESCAPE_A = 2
cdef int STATUS_ESCAPE_B = 3


cdef inline Py_ssize_t _locate(const double[::1] times, double t, Py_ssize_t k,
                               double* w) noexcept nogil:
    cdef Py_ssize_t K = times.shape[0]
    if K == 1:
        w[0] = 0.0
        return 0
    while k > 0 and t < times[k]:
        k -= 1
    while k < K - 2 and t > times[k + 1]:
        k += 1
    cdef double ww = (t - times[k]) / (times[k + 1] - times[k])
    if ww < 0.0:
        ww = 0.0
    elif ww > 1.0:
        ww = 1.0
    w[0] = ww
    return k


cdef inline void _poly(const double[:, :, ::1] c, Py_ssize_t k, double z0, double h,
                       double z, double* val, double* der) noexcept nogil:
    cdef Py_ssize_t ncell = c.shape[1]
    cdef double x = (z - z0) / h
    cdef Py_ssize_t j
    if x >= 0:
        j = <Py_ssize_t>x
    else:
        j = -1
    if j < 0:
        j = 0
    elif j >= ncell:
        j = ncell - 1
    x -= j
    cdef double c0 = c[k, j, 0], c1 = c[k, j, 1], c2 = c[k, j, 2]
    cdef double c3 = c[k, j, 3], c4 = c[k, j, 4], c5 = c[k, j, 5]
    val[0] = c0 + x * (c1 + x * (c2 + x * (c3 + x * (c4 + x * c5))))
    der[0] = (c1 + x * (2 * c2 + x * (3 * c3 + x * (4 * c4 + x * 5 * c5)))) / h


cdef inline void _eval(const double[:, :, ::1] c, double z0, double h, Py_ssize_t k,
                       double w, double z, double* val, double* der) noexcept nogil:
    cdef double v0, d0, v1, d1
    _poly(c, k, z0, h, z, &v0, &d0)
    if w == 0.0:
        val[0] = v0
        der[0] = d0
        return
    _poly(c, k + 1, z0, h, z, &v1, &d1)
    val[0] = v0 + w * (v1 - v0)
    der[0] = d0 + w * (d1 - d0)


def integrate(const double[:, :, ::1] ca, double za_grid0, double ha,
              const double[:, :, ::1] cb, double zb_grid0, double hb,
              const double[::1] times, const double[::1] ref_a, const double[::1] ref_b,
              double[::1] state, long n_steps, const double[::1] params,
              const double[::1] weights, long record_every, double[:, ::1] records,
              double[::1] track):
    cdef double ma = params[0], mb = params[1], qa = params[2], qb = params[3]
    cdef double kc = params[4]
    cdef double za_lo = params[5], za_hi = params[6], zb_lo = params[7], zb_hi = params[8]
    cdef double min_sep = params[9], eint_ref = params[10], dt = params[11]
    cdef double kab = kc * qa * qb
    cdef double za = state[0], va = state[1], zb = state[2], vb = state[3], t = state[4]
    cdef Py_ssize_t K = times.shape[0]
    cdef Py_ssize_t nw = weights.shape[0]
    cdef Py_ssize_t max_records = records.shape[0]
    cdef Py_ssize_t k = 0, n_rec = 0, j
    cdef long step = 0
    cdef int status = STATUS_OK
    cdef double w = 0.0, pa, da, pb, db, sep, r, fc, fa, fb, h_dt
    cdef double ra, rb, ea, eb, ei, min_ea = NAN, t_min
    cdef bint initial_collision = False

    with nogil:
        k = _locate(times, t, k, &w)
        _eval(ca, za_grid0, ha, k, w, za, &pa, &da)
        _eval(cb, zb_grid0, hb, k, w, zb, &pb, &db)
        sep = za - zb
        r = fabs(sep)
        if r < min_sep:
            status = STATUS_COLLISION
            initial_collision = True
        else:
            fc = kab * sep / (r * r * r)
            fa = -qa * da + fc
            fb = -qb * db - fc
            if K == 1:
                ra = ref_a[0]
                rb = ref_b[0]
            else:
                ra = ref_a[k] + w * (ref_a[k + 1] - ref_a[k])
                rb = ref_b[k] + w * (ref_b[k + 1] - ref_b[k])
            ea = 0.5 * ma * va * va + qa * (pa - ra)
            eb = 0.5 * mb * vb * vb + qb * (pb - rb)
            ei = kab / r - eint_ref
            min_ea = ea
            t_min = t
            if record_every > 0 and n_rec < max_records:
                records[n_rec, 0] = t
                records[n_rec, 1] = za
                records[n_rec, 2] = va
                records[n_rec, 3] = ea
                records[n_rec, 4] = zb
                records[n_rec, 5] = vb
                records[n_rec, 6] = eb
                records[n_rec, 7] = ei
                records[n_rec, 8] = ea + eb + ei
                n_rec += 1

            while step < n_steps:
                for j in range(nw):
                    h_dt = weights[j] * dt
                    va += 0.5 * h_dt * fa / ma
                    vb += 0.5 * h_dt * fb / mb
                    za += h_dt * va
                    zb += h_dt * vb
                    t += h_dt
                    if not (za_lo <= za <= za_hi):
                        status = STATUS_ESCAPE_A
                        break
                    if not (zb_lo <= zb <= zb_hi):
                        status = STATUS_ESCAPE_B
                        break
                    sep = za - zb
                    r = fabs(sep)
                    if r < min_sep:
                        status = STATUS_COLLISION
                        break
                    k = _locate(times, t, k, &w)
                    _eval(ca, za_grid0, ha, k, w, za, &pa, &da)
                    _eval(cb, zb_grid0, hb, k, w, zb, &pb, &db)
                    fc = kab * sep / (r * r * r)
                    fa = -qa * da + fc
                    fb = -qb * db - fc
                    va += 0.5 * h_dt * fa / ma
                    vb += 0.5 * h_dt * fb / mb
                if status != STATUS_OK:
                    break
                step += 1
                if K == 1:
                    ra = ref_a[0]
                    rb = ref_b[0]
                else:
                    ra = ref_a[k] + w * (ref_a[k + 1] - ref_a[k])
                    rb = ref_b[k] + w * (ref_b[k + 1] - ref_b[k])
                ea = 0.5 * ma * va * va + qa * (pa - ra)
                eb = 0.5 * mb * vb * vb + qb * (pb - rb)
                ei = kab / r - eint_ref
                if ea < min_ea:
                    min_ea = ea
                    t_min = t
                if record_every > 0 and step % record_every == 0 and n_rec < max_records:
                    records[n_rec, 0] = t
                    records[n_rec, 1] = za
                    records[n_rec, 2] = va
                    records[n_rec, 3] = ea
                    records[n_rec, 4] = zb
                    records[n_rec, 5] = vb
                    records[n_rec, 6] = eb
                    records[n_rec, 7] = ei
                    records[n_rec, 8] = ea + eb + ei
                    n_rec += 1

    state[0] = za
    state[1] = va
    state[2] = zb
    state[3] = vb
    state[4] = t
    if initial_collision:
        track[0] = NAN
        track[1] = t
    else:
        track[0] = min_ea
        track[1] = t_min
    return status, step, n_rec
