"""Degree-m differentials and co-closed 1-forms on the quotient surface.

A differential of degree m >= 2 is realised as a holomorphic function
Theta on the disk, built as a relative Poincare series

    Theta(z) = sum_gamma f(gamma z) * (gamma'(z))^m

over a word-length truncation of the group; f is a polynomial seed.  Each
term is holomorphic, so the truncated sum is exactly holomorphic; the
truncation error shows up only as an equivariance defect, whose magnitude
(the norm of the last word-length shell) is always returned alongside
values.  The induced scalar alpha = |Theta|^2 ((1-|z|^2)/2)^(2m) is the
squared norm of the differential in the curvature -1 background metric.

Co-closed 1-forms theta = *dv are built from a group-averaged radial bump
potential v; star dv is divergence-free for every metric in the conformal
class, so the pair (g0, theta) feeds the Gaussian-thermostat family with
no PDE solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError
from .geometry import EPS_BOUNDARY, FuchsianGroup, hyp_distance, octagon_circumradius

DEFAULT_TRUNCATION = 6
_EVAL_CHUNK = 4_000_000  # element*point products per vectorised block


def _check_points(z: np.ndarray) -> None:
    if np.any(np.abs(z) >= 1.0 - EPS_BOUNDARY):
        raise DomainError("evaluation point too close to the ideal boundary")


class AutomorphicForm:
    """Truncated Poincare series for a degree-m differential.

    Parameters
    ----------
    group : FuchsianGroup
    m : degree, >= 2
    seed_coefficients : coefficients c_k of the polynomial seed f(z) = sum c_k z^k
    truncation_word_length : group truncation; default 6
    """

    def __init__(self, group: FuchsianGroup, m: int, seed_coefficients=(1.0,),
                 truncation_word_length: int | None = None):
        if m < 2:
            raise ValueError("degree m must be >= 2 (the m = 1 family degenerates to A = 0)")
        self.group = group
        self.m = int(m)
        self.seed = np.asarray(seed_coefficients, dtype=complex)
        if self.seed.ndim != 1 or self.seed.size == 0:
            raise ValueError("seed_coefficients must be a non-empty 1d sequence")
        self.truncation_word_length = (
            DEFAULT_TRUNCATION if truncation_word_length is None else int(truncation_word_length)
        )
        if self.truncation_word_length < 1:
            raise ValueError("truncation must be >= 1")
        self.table = group.enumerate(self.truncation_word_length)
        self._last_shell = self.table.word_length == self.truncation_word_length
        self._compiled: "CompiledForm | None" = None

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.seed == 0))

    def compiled(self) -> "CompiledForm":
        """Cached Taylor compilation (see CompiledForm)."""
        if self._compiled is None:
            self._compiled = CompiledForm(self)
        return self._compiled

    # -- evaluation -------------------------------------------------------

    def _seed_eval(self, w: np.ndarray):
        """Seed polynomial and derivative by Horner."""
        f = np.zeros_like(w)
        fp = np.zeros_like(w)
        for c in self.seed[::-1]:
            fp = fp * w + f
            f = f * w + c
        return f, fp

    def eval_many(self, z: np.ndarray):
        """Vectorised series evaluation.

        Returns (value, derivative, tail) arrays; derivative is the exact
        term-wise d/dz of the truncated sum and tail the sum of absolute
        values of the last word-length shell at each point.
        """
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        _check_points(z)
        n_el = len(self.table)
        val = np.zeros(z.shape, dtype=complex)
        dval = np.zeros(z.shape, dtype=complex)
        tail = np.zeros(z.shape, dtype=float)
        if self.is_zero:
            return val, dval, tail
        m = self.m
        chunk = max(1, int(_EVAL_CHUNK // max(1, z.size)))
        for lo in range(0, n_el, chunk):
            a = self.table.a[lo : lo + chunk, None]
            b = self.table.b[lo : lo + chunk, None]
            last = self._last_shell[lo : lo + chunk]
            w = np.conj(b) * z[None, :] + np.conj(a)
            gz = (a * z[None, :] + b) / w
            gp = 1.0 / (w * w)
            f, fp = self._seed_eval(gz)
            gpm = gp**m
            term = f * gpm
            dterm = (fp * gp - 2.0 * m * np.conj(b) * f / w) * gpm
            val += term.sum(axis=0)
            dval += dterm.sum(axis=0)
            if last.any():
                tail += np.abs(term[last]).sum(axis=0)
        return val, dval, tail

    def series_eval(self, z: complex):
        """Value, derivative and tail estimate at a single point."""
        v, d, t = self.eval_many(np.array([z]))
        return complex(v[0]), complex(d[0]), float(t[0])

    def alpha_many(self, z: np.ndarray) -> np.ndarray:
        """alpha = |Theta|^2 ((1-|z|^2)/2)^(2m), the g0 squared norm."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        v, _, _ = self.eval_many(z)
        conf = (1.0 - np.abs(z) ** 2) / 2.0
        return np.abs(v) ** 2 * conf ** (2 * self.m)

    def alpha_eval(self, z: complex) -> float:
        return float(self.alpha_many(np.array([z]))[0])

    # -- diagnostics --------------------------------------------------------

    def equivariance_residual(self, z: complex, gen_index: int = 0) -> float:
        """|Theta(gz) g'(z)^m - Theta(z)| for one generator."""
        g = self.group.generators[gen_index]
        v, _, _ = self.eval_many(np.array([z, g.apply(z)]))
        gp = g.derivative(z)
        return float(abs(v[1] * gp**self.m - v[0]))

    def shell_norms(self, z: complex) -> np.ndarray:
        """Per-word-length shell sums of |term| at z (convergence report)."""
        z = np.asarray([z], dtype=complex)
        out = []
        m = self.m
        for length in range(self.truncation_word_length + 1):
            sh = self.table.shell(length)
            if len(sh) == 0:
                out.append(0.0)
                continue
            a = sh.a[:, None]
            b = sh.b[:, None]
            w = np.conj(b) * z[None, :] + np.conj(a)
            gz = (a * z[None, :] + b) / w
            f, _ = self._seed_eval(gz)
            out.append(float(np.abs(f / w ** (2 * m)).sum()))
        return np.array(out)


class CompiledForm:
    """Taylor compilation of a truncated Poincare series.

    The truncated series is holomorphic on the closed disk of radius
    r_circle < 1 (every term's pole sits outside the unit circle), so its
    Taylor coefficients at 0 drop out of one FFT on that circle.  The
    resulting polynomial agrees with the series to ~1e-12 on the
    fundamental octagon at a tiny fraction of the evaluation cost, and it
    is itself exactly holomorphic, which is what the frame-derivative
    identities downstream rely on.
    """

    def __init__(self, form: AutomorphicForm, r_circle: float = 0.93, n_fft: int = 2048,
                 r_eval: float = 0.845, coeff_cut: float = 1e-14):
        self.m = form.m
        self.is_zero = form.is_zero
        if form.is_zero:
            self.coeffs = np.zeros(1, dtype=complex)
            self.dcoeffs = np.zeros(1, dtype=complex)
            self.compile_error = 0.0
            self.tail_reference = 0.0
            return
        circle = r_circle * np.exp(2j * np.pi * np.arange(n_fft) / n_fft)
        vals, _, tails = form.eval_many(circle)
        c = np.fft.fft(vals) / n_fft
        c /= r_circle ** np.arange(n_fft)
        # keep coefficients while they still matter at the octagon radius
        contrib = np.abs(c) * r_eval ** np.arange(n_fft)
        scale = max(np.max(np.abs(vals)), 1e-300)
        n_keep = n_fft
        running = 0.0
        for k in range(n_fft - 1, -1, -1):
            running += contrib[k]
            if running > coeff_cut * scale:
                n_keep = k + 2
                break
        self.coeffs = c[: min(n_keep, n_fft)].copy()
        self.dcoeffs = self.coeffs[1:] * np.arange(1, len(self.coeffs))
        self.tail_reference = float(np.max(tails))
        # verify on points inside the octagon against the direct series
        probe = 0.8 * np.sqrt(np.linspace(0.02, 0.98, 37)) * np.exp(
            2j * np.pi * np.linspace(0.0, 1.0, 37, endpoint=False)
        )
        direct, ddirect, _ = form.eval_many(probe)
        comp = self.value(probe)
        dcomp = self.derivative(probe)
        denom = max(np.max(np.abs(direct)), 1e-300)
        self.compile_error = float(
            max(np.max(np.abs(comp - direct)), np.max(np.abs(dcomp - ddirect))) / denom
        )
        if self.compile_error > 1e-8:
            raise ConvergenceError(
                f"series compilation error {self.compile_error:.2e}; "
                "raise n_fft or shrink r_circle"
            )

    def value(self, z):
        return np.polynomial.polynomial.polyval(z, self.coeffs)

    def derivative(self, z):
        if len(self.coeffs) < 2:
            return np.zeros_like(np.asarray(z, dtype=complex))
        return np.polynomial.polynomial.polyval(z, self.dcoeffs)

    def alpha(self, z):
        """|Theta|^2 ((1-|z|^2)/2)^(2m) from the compiled polynomial."""
        z = np.asarray(z, dtype=complex)
        conf = (1.0 - np.abs(z) ** 2) / 2.0
        return np.abs(self.value(z)) ** 2 * conf ** (2 * self.m)


def series_eval(form: AutomorphicForm, z: complex):
    """Module-level alias for AutomorphicForm.series_eval."""
    return form.series_eval(z)


def alpha_eval(form: AutomorphicForm, z: complex) -> float:
    """Module-level alias for AutomorphicForm.alpha_eval."""
    return form.alpha_eval(z)


# -- co-closed 1-forms ------------------------------------------------------


@dataclass(frozen=True)
class BumpSpec:
    """One radial bump of the potential: centre, hyperbolic support radius, amplitude."""

    center: complex
    width: float
    amplitude: float


class CoexactOneForm:
    """theta = *dv for a group-averaged C^3 radial bump potential v.

    v(z) = sum_j A_j sum_gamma chi(rho_j(gamma)) with rho = |T_c(z)|^2 / rho0
    and chi(t) = (1-t)^4 on [0, 1]; rho0 = tanh^2(width/2).  Jets of v to
    second order are analytic, so the induced function theta on SM has
    exact frame derivatives and VV theta = -theta structurally.
    """

    def __init__(self, group: FuchsianGroup, bumps, truncation_word_length: int = 3):
        self.group = group
        self.bumps = [b if isinstance(b, BumpSpec) else BumpSpec(complex(b[0]), float(b[1]), float(b[2]))
                      for b in bumps]
        self.truncation_word_length = int(truncation_word_length)
        for b in self.bumps:
            if not (0.0 < b.width < 1.4):
                raise ValueError("bump width must be a hyperbolic radius in (0, 1.4)")
            if abs(b.center) >= 1.0 - EPS_BOUNDARY:
                raise DomainError("bump centre too close to the boundary")
        self._build_centers()

    def _build_centers(self):
        """Translate every bump centre over the truncated group and prune
        translates whose support cannot reach the fundamental octagon.

        If the outermost word-length shell still contributes a kept
        translate, deeper (missing) shells might too, so the averaged
        potential would not be exactly invariant on the octagon.
        """
        table = self.group.enumerate(self.truncation_word_length)
        reach = octagon_circumradius(self.group) + 0.2
        centers, rho0, amps = [], [], []
        for b in self.bumps:
            c = complex(b.center)
            t0 = np.tanh(b.width / 2.0) ** 2
            ga, gb = table.a, table.b
            tc = (ga * c + gb) / (np.conj(gb) * c + np.conj(ga))
            d = 2.0 * np.arctanh(np.abs(tc))
            keep = d <= reach + b.width
            if np.any(keep & (table.word_length == self.truncation_word_length)):
                raise ConvergenceError(
                    "bump support reaches the outermost enumerated shell; "
                    "increase truncation_word_length"
                )
            for cc in tc[keep]:
                centers.append(cc)
                rho0.append(t0)
                amps.append(b.amplitude)
        self.centers = np.asarray(centers, dtype=complex)
        self.rho0 = np.asarray(rho0, dtype=float)
        self.amplitudes = np.asarray(amps, dtype=float)

    @property
    def is_zero(self) -> bool:
        return len(self.centers) == 0 or bool(np.all(self.amplitudes == 0.0))

    def potential_jet(self, z: complex):
        """(v, vx, vy, vxx, vxy, vyy) at a disk point, all analytic."""
        zc = complex(z)
        v = vx = vy = vxx = vxy = vyy = 0.0
        for c, r0, amp in zip(self.centers, self.rho0, self.amplitudes):
            den = 1.0 - np.conj(c) * zc
            T = (zc - c) / den
            rho = abs(T) ** 2
            t = rho / r0
            if t >= 1.0:
                continue
            one = 1.0 - t
            chi = one**4
            dchi = -4.0 * one**3 / r0
            ddchi = 12.0 * one**2 / (r0 * r0)
            Tp = (1.0 - abs(c) ** 2) / den**2
            Tpp = 2.0 * np.conj(c) * (1.0 - abs(c) ** 2) / den**3
            rz = Tp * np.conj(T)
            rzz = Tpp * np.conj(T)
            rzzb = abs(Tp) ** 2
            Vz = dchi * rz
            Vzz = ddchi * rz * rz + dchi * rzz
            Vzzb = ddchi * abs(rz) ** 2 + dchi * rzzb
            v += amp * chi
            vx += amp * 2.0 * Vz.real
            vy += amp * (-2.0 * Vz.imag)
            vxx += amp * (2.0 * Vzz.real + 2.0 * Vzzb)
            vyy += amp * (-2.0 * Vzz.real + 2.0 * Vzzb)
            vxy += amp * (-2.0 * Vzz.imag)
        return v, vx, vy, vxx, vxy, vyy

    def theta_jet(self, state, s_jet=None):
        """Frame jet (theta, V theta, X theta, H theta, XV theta, HV theta).

        `state` is (z, phi).  By default the jet is taken in the hyperbolic
        background metric (conformal exponent s0 = log(2/(1-|z|^2)));
        a custom (s, sx, sy) triple may be supplied.
        """
        z, phi = state
        zc = complex(z)
        if abs(zc) >= 1.0 - EPS_BOUNDARY:
            raise DomainError("state too close to the ideal boundary")
        if s_jet is None:
            rho = abs(zc) ** 2
            s = np.log(2.0 / (1.0 - rho))
            sx = 2.0 * zc.real / (1.0 - rho)
            sy = 2.0 * zc.imag / (1.0 - rho)
        else:
            s, sx, sy = s_jet
        v, vx, vy, vxx, vxy, vyy = self.potential_jet(zc)
        C, S = np.cos(phi), np.sin(phi)
        es = np.exp(-s)
        P = -vy * C + vx * S
        R = vy * S + vx * C
        Px = -vxy * C + vxx * S
        Py = -vyy * C + vxy * S
        Rx = vxy * S + vxx * C
        Ry = vyy * S + vxy * C
        th = es * P
        Vth = es * R
        th_x = es * (Px - sx * P)
        th_y = es * (Py - sy * P)
        Vth_x = es * (Rx - sx * R)
        Vth_y = es * (Ry - sy * R)
        Xth = es * (C * th_x + S * th_y + (-sx * S + sy * C) * Vth)
        Hth = es * (-S * th_x + C * th_y - (sx * C + sy * S) * Vth)
        XVth = es * (C * Vth_x + S * Vth_y + (-sx * S + sy * C) * (-th))
        HVth = es * (-S * Vth_x + C * Vth_y - (sx * C + sy * S) * (-th))
        return th, Vth, Xth, Hth, XVth, HVth

    def invariance_residual(self, z: complex, gen_index: int = 0) -> float:
        """|v(gz) - v(z)| (should vanish up to the pruning construction)."""
        g = self.group.generators[gen_index]
        return abs(self.potential_jet(g.apply(z))[0] - self.potential_jet(z)[0])


def theta_jet(form: CoexactOneForm, state):
    """Module-level alias for CoexactOneForm.theta_jet."""
    return form.theta_jet(state)
