"""Fused 2D kernels for the solver hot path.

The descent solver spends nearly all its time applying the nonlinear map and
evaluating the scalar line function; the numpy implementations allocate a
dozen temporaries per call.  These kernels fuse the loops (single-threaded on
purpose: accumulation order is fixed, so runs stay bitwise deterministic).

Everything here mirrors the reference implementations in ``energy`` and
``solver`` exactly up to floating-point associativity; the test suite pins
the two paths together.  When numba is unavailable the solver falls back to
the reference path.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except Exception:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def lap2d(f, hx2, hy2, out):
    n0, n1 = f.shape
    for i in range(n0):
        ip = i + 1 if i + 1 < n0 else 0
        im = i - 1 if i >= 1 else n0 - 1
        for j in range(n1):
            jp = j + 1 if j + 1 < n1 else 0
            jm = j - 1 if j >= 1 else n1 - 1
            out[i, j] = (f[ip, j] - 2.0 * f[i, j] + f[im, j]) / hx2 + (
                f[i, jp] - 2.0 * f[i, j] + f[i, jm]
            ) / hy2


@njit(cache=True)
def _var_convex_2d(phi, lap2phi, eps2, eps4, c_quad, hx, hy, out):
    """var_convex given a precomputed biharmonic, fused over cells."""
    n0, n1 = phi.shape
    for i in range(n0):
        ip = i + 1 if i + 1 < n0 else 0
        im = i - 1 if i >= 1 else n0 - 1
        for j in range(n1):
            jp = j + 1 if j + 1 < n1 else 0
            jm = j - 1 if j >= 1 else n1 - 1
            p = phi[i, j]
            om = 1.0 - p * p
            b = np.log((1.0 + p) / (1.0 - p))
            b1 = 2.0 / om
            b2 = 4.0 * p / (om * om)

            dxf = (phi[ip, j] - p) / hx
            dxb = (p - phi[im, j]) / hx
            dyf = (phi[i, jp] - p) / hy
            dyb = (p - phi[i, jm]) / hy
            avg_sq = 0.5 * (dxf * dxf + dxb * dxb) + 0.5 * (dyf * dyf + dyb * dyb)

            b1_ip = 2.0 / (1.0 - phi[ip, j] * phi[ip, j])
            b1_im = 2.0 / (1.0 - phi[im, j] * phi[im, j])
            b1_jp = 2.0 / (1.0 - phi[i, jp] * phi[i, jp])
            b1_jm = 2.0 / (1.0 - phi[i, jm] * phi[i, jm])
            div_flux = (0.5 * (b1_ip + b1) * dxf - 0.5 * (b1 + b1_im) * dxb) / hx + (
                0.5 * (b1_jp + b1) * dyf - 0.5 * (b1 + b1_jm) * dyb
            ) / hy

            out[i, j] = (
                eps4 * lap2phi[i, j]
                + b * b1
                + c_quad * p
                + eps2 * (b2 * avg_sq - 2.0 * div_flux)
            )


@njit(cache=True)
def _residual_2d(phi, f, v, dt, hx2, hy2, vol, r_out):
    """r = f - (phi/dt - lap v); returns ||r||_2."""
    n0, n1 = phi.shape
    acc = 0.0
    for i in range(n0):
        ip = i + 1 if i + 1 < n0 else 0
        im = i - 1 if i >= 1 else n0 - 1
        for j in range(n1):
            jp = j + 1 if j + 1 < n1 else 0
            jm = j - 1 if j >= 1 else n1 - 1
            lap_v = (v[ip, j] - 2.0 * v[i, j] + v[im, j]) / hx2 + (
                v[i, jp] - 2.0 * v[i, j] + v[i, jm]
            ) / hy2
            r = f[i, j] - (phi[i, j] / dt - lap_v)
            r_out[i, j] = r
            acc += r * r
    return np.sqrt(vol * acc)


@njit(cache=True)
def line_g_2d(phi, d, lap_d, gsq0, gsq1, gsq2, face_px, face_qx, face_py, face_qy,
              alpha, eps2, vol):
    """Nonlinear part of g(alpha); the caller adds the linear-in-alpha part.

    Returns -<b b1 + eps2 b2 gsq, lap d> - 2 eps2 [avg(b1) Dphi_a, D(lap d)]
    with phi_a = phi + alpha d, matching LineObjective.__call__.
    """
    n0, n1 = phi.shape
    point_acc = 0.0
    face_acc = 0.0
    for i in range(n0):
        ip = i + 1 if i + 1 < n0 else 0
        for j in range(n1):
            jp = j + 1 if j + 1 < n1 else 0
            p = phi[i, j] + alpha * d[i, j]
            om = 1.0 - p * p
            if om <= 0.0:
                return np.nan, np.nan
            b = np.log((1.0 + p) / (1.0 - p))
            gsq = gsq0[i, j] + alpha * (2.0 * gsq1[i, j] + alpha * gsq2[i, j])
            num = 2.0 * b * om + 4.0 * eps2 * p * gsq
            point_acc += num / (om * om) * lap_d[i, j]

            p_ip = phi[ip, j] + alpha * d[ip, j]
            p_jp = phi[i, jp] + alpha * d[i, jp]
            b1 = 2.0 / om
            b1_ip = 2.0 / (1.0 - p_ip * p_ip)
            b1_jp = 2.0 / (1.0 - p_jp * p_jp)
            face_acc += 0.5 * (b1 + b1_ip) * (face_px[i, j] + alpha * face_qx[i, j])
            face_acc += 0.5 * (b1 + b1_jp) * (face_py[i, j] + alpha * face_qy[i, j])
    return -vol * point_acc, -2.0 * eps2 * vol * face_acc


def fast_residual(phi, f, dt, grid, pp, work):
    """r = f - N(phi) and its L2 norm via the fused kernels (2D only)."""
    hx, hy = grid.spacing
    lap1, lap2, v, r = work
    lap2d(phi, hx * hx, hy * hy, lap1)
    lap2d(lap1, hx * hx, hy * hy, lap2)
    _var_convex_2d(
        phi, lap2, pp.eps**2, pp.eps**4, pp.lam * (pp.lam + pp.eps_p_eta), hx, hy, v
    )
    res = _residual_2d(phi, f, v, dt, hx * hx, hy * hy, grid.cell_volume, r)
    return r, float(res)


@njit(cache=True)
def line_setup_2d(phi, d, f, lap_phi, lap_d, dt, eps4, c_quad, hx, hy, vol,
                  gsq0, gsq1, gsq2, face_px, face_qx, face_py, face_qy):
    """All alpha-independent pieces of the line function in two passes.

    Expects lap_phi and lap_d precomputed; fills the quadratic gradient
    coefficients and the face products against D(lap d), and returns
    (lin0_without_f, lin1, sum_fd) so the caller assembles
    lin0 = lin0_without_f - vol * sum_fd.
    """
    n0, n1 = phi.shape
    s_phid = 0.0
    s_dd = 0.0
    s_bphi_ld = 0.0
    s_bd_ld = 0.0
    s_phi_ld = 0.0
    s_d_ld = 0.0
    s_fd = 0.0
    hx2 = hx * hx
    hy2 = hy * hy
    for i in range(n0):
        ip = i + 1 if i + 1 < n0 else 0
        im = i - 1 if i >= 1 else n0 - 1
        for j in range(n1):
            jp = j + 1 if j + 1 < n1 else 0
            jm = j - 1 if j >= 1 else n1 - 1
            bilap_phi = (lap_phi[ip, j] - 2.0 * lap_phi[i, j] + lap_phi[im, j]) / hx2 + (
                lap_phi[i, jp] - 2.0 * lap_phi[i, j] + lap_phi[i, jm]
            ) / hy2
            bilap_d = (lap_d[ip, j] - 2.0 * lap_d[i, j] + lap_d[im, j]) / hx2 + (
                lap_d[i, jp] - 2.0 * lap_d[i, j] + lap_d[i, jm]
            ) / hy2
            ld = lap_d[i, j]
            s_phid += phi[i, j] * d[i, j]
            s_dd += d[i, j] * d[i, j]
            s_bphi_ld += bilap_phi * ld
            s_bd_ld += bilap_d * ld
            s_phi_ld += phi[i, j] * ld
            s_d_ld += d[i, j] * ld
            s_fd += f[i, j] * d[i, j]

            # forward and backward face differences per axis
            pxf = (phi[ip, j] - phi[i, j]) / hx
            pxb = (phi[i, j] - phi[im, j]) / hx
            pyf = (phi[i, jp] - phi[i, j]) / hy
            pyb = (phi[i, j] - phi[i, jm]) / hy
            dxf = (d[ip, j] - d[i, j]) / hx
            dxb = (d[i, j] - d[im, j]) / hx
            dyf = (d[i, jp] - d[i, j]) / hy
            dyb = (d[i, j] - d[i, jm]) / hy
            gsq0[i, j] = 0.5 * (pxf * pxf + pxb * pxb) + 0.5 * (pyf * pyf + pyb * pyb)
            gsq1[i, j] = 0.5 * (pxf * dxf + pxb * dxb) + 0.5 * (pyf * dyf + pyb * dyb)
            gsq2[i, j] = 0.5 * (dxf * dxf + dxb * dxb) + 0.5 * (dyf * dyf + dyb * dyb)
            lxf = (lap_d[ip, j] - ld) / hx
            lyf = (lap_d[i, jp] - ld) / hy
            face_px[i, j] = pxf * lxf
            face_qx[i, j] = dxf * lxf
            face_py[i, j] = pyf * lyf
            face_qy[i, j] = dyf * lyf
    lin0_nf = vol * (s_phid / dt - eps4 * s_bphi_ld - c_quad * s_phi_ld)
    lin1 = vol * (s_dd / dt - eps4 * s_bd_ld - c_quad * s_d_ld)
    return lin0_nf, lin1, s_fd


@njit(cache=True)
def step_cap_2d(phi, d, bound):
    """Largest alpha with |phi + alpha d| <= bound everywhere."""
    n0, n1 = phi.shape
    cap = np.inf
    for i in range(n0):
        for j in range(n1):
            dd = d[i, j]
            if dd > 0.0:
                c = (bound - phi[i, j]) / dd
            elif dd < 0.0:
                c = (-bound - phi[i, j]) / dd
            else:
                continue
            if c < cap:
                cap = c
    return cap
