"""Gain profiles and the localized damping feedback.

The actuation operator built from a nonnegative gain g with unit integral is

    (G v)(x) = g(x) * ( v(x) - integral(v * g) ),

and the stabilizing feedback composes it with a fractional derivative:
G D^delta G.  In coefficient space that composition splits exactly into

    G D^delta G = Dtilde + N1 + R,

a diagonal dissipation with symbol d(k) = sum_l |l|^delta |ghat(l-k)|^2
(zero at k = 0), an off-diagonal double convolution restricted to n != k,
and a rank-style mean correction built from four scalar pairings.  All
operators here are evaluated with full intermediate bandwidth, so the
split is an identity up to rounding; Galerkin truncation happens only
where the dynamics projects onto a fixed state band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ProfileError, TruncationError
from .spectral import (
    TWO_PI,
    GridField,
    SpectralField,
    apply_multiplier,
    l2_norm,
    to_grid,
    to_spectral,
)


@dataclass(frozen=True, eq=False)
class DampingProfile:
    """Fourier data of the gain g plus the dissipation order delta.

    `ghat` holds coefficients for l in {-K..K}; `support` is either the
    string 'global' or the open interval (a, b) the gain was built on.
    Profiles are immutable; derived operator matrices are memoised.
    """

    delta: float
    ghat: np.ndarray
    support: object

    def __post_init__(self):
        if not self.delta > 0:
            raise ProfileError("delta must be positive")
        ghat = np.asarray(self.ghat, dtype=np.complex128)
        if ghat.ndim != 1 or ghat.size % 2 != 1:
            raise ProfileError("ghat must hold an odd-length centered band")
        k = (ghat.size - 1) // 2
        center = ghat[k]
        if abs(center - 1.0 / TWO_PI) > 1e-12:
            raise ProfileError("gain is not normalized: need ghat(0) = 1/(2 pi)")
        flipped = np.conj(ghat[::-1])
        if np.abs(ghat - flipped).max() > 1e-12:
            raise ProfileError("gain coefficients must be Hermitian-symmetric")
        ghat = 0.5 * (ghat + flipped)
        ghat[k] = 1.0 / TWO_PI
        ghat.setflags(write=False)
        object.__setattr__(self, "ghat", ghat)
        object.__setattr__(self, "_cache", {})

    @property
    def k_modes(self) -> int:
        return (self.ghat.size - 1) // 2

    def coeff(self, l: int) -> complex:
        if abs(l) > self.k_modes:
            return 0j
        return complex(self.ghat[l + self.k_modes])

    def d_symbol(self, k):
        """Dissipation symbol d(k) = sum_j |k+j|^delta |ghat(j)|^2, d(0) = 0.

        Evaluated at |k|, which realises the exact evenness d(-k) = d(k)
        instead of leaving it to summation order.
        """
        karr = np.abs(np.atleast_1d(np.asarray(k, dtype=np.int64)))
        j = np.arange(-self.k_modes, self.k_modes + 1)
        weights = np.abs(self.ghat) ** 2
        powers = np.abs(karr[:, None] + j[None, :]).astype(np.float64) ** self.delta
        out = powers @ weights
        out[karr == 0] = 0.0
        if np.isscalar(k) or np.asarray(k).ndim == 0:
            return float(out[0])
        return out

    def to_json_dict(self) -> dict:
        return {
            "support": "global" if self.support == "global" else list(self.support),
            "modes": self.k_modes,
            "delta": self.delta,
            "ghat": [[float(c.real), float(c.imag)] for c in self.ghat],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "DampingProfile":
        support = data["support"]
        if support != "global":
            support = tuple(float(v) for v in support)
        ghat = np.array([complex(re, im) for re, im in data["ghat"]])
        return cls(delta=float(data["delta"]), ghat=ghat, support=support)


def make_profile_global(delta: float) -> DampingProfile:
    """Constant gain 1/(2 pi); the feedback reduces to D^delta / (4 pi^2)."""
    return DampingProfile(delta=delta, ghat=np.array([1.0 / TWO_PI + 0j]), support="global")


def make_profile_bump(
    a: float,
    b: float,
    n_modes: int,
    delta: float,
    grid_m: int | None = None,
    neg_tol: float = 1e-5,
) -> DampingProfile:
    """Raised-cosine-squared gain supported in (a, b), truncated to n_modes.

    The closed form c0 * (1 + cos(2 pi (x - xc)/(b - a)))^2 is sampled,
    transformed, truncated, and rescaled so ghat(0) = 1/(2 pi) exactly.
    Bandwidth truncation makes the profile slightly sign-indefinite; the
    synthesis fails if it dips below -neg_tol times its peak.
    """
    if not 0.0 <= a < b <= TWO_PI:
        raise ProfileError(f"invalid support ({a}, {b}): need 0 <= a < b <= 2 pi")
    if n_modes < 1:
        raise ProfileError("need at least one gain mode")
    if grid_m is None:
        grid_m = 1024
        while grid_m < 8 * n_modes:
            grid_m *= 2
    x = TWO_PI * np.arange(grid_m) / grid_m
    xc = 0.5 * (a + b)
    stretch = TWO_PI / (b - a)
    vals = np.where(
        (x > a) & (x < b),
        (1.0 + np.cos(stretch * (x - xc))) ** 2,
        0.0,
    )
    raw = to_spectral(GridField(vals), n_modes)
    center = raw.coeffs[n_modes].real
    if center <= 0:
        raise ProfileError("sampled gain has nonpositive mean")
    ghat = raw.coeffs * (1.0 / (TWO_PI * center))
    ghat[n_modes] = 1.0 / TWO_PI
    profile = DampingProfile(delta=delta, ghat=ghat, support=(a, b))
    g_grid = to_grid(gain_field(profile), grid_m).values
    peak = g_grid.max()
    if g_grid.min() < -neg_tol * peak:
        raise TruncationError(
            f"truncated gain dips to {g_grid.min():.3e} (peak {peak:.3e}); increase n_modes"
        )
    return profile


def gain_field(p: DampingProfile, n_modes: int | None = None) -> SpectralField:
    """The gain g itself as a spectral field (optionally zero-padded)."""
    field = SpectralField(p.k_modes, p.ghat.copy())
    if n_modes is not None and n_modes != p.k_modes:
        field = field.with_cutoff(n_modes)
    return field


def gain_pairing(p: DampingProfile, v: SpectralField) -> float:
    """The observation scalar integral(v * g)."""
    return _pair_with_gain(p, v.coeffs, v.n_modes)


def _pair_with_gain(p: DampingProfile, coeffs: np.ndarray, band: int) -> float:
    m = min(band, p.k_modes)
    seg = coeffs[band - m : band + m + 1]
    gseg = p.ghat[p.k_modes - m : p.k_modes + m + 1]
    val = TWO_PI * np.sum(seg * np.conj(gseg))
    return float(val.real)


def _ghat_at(p: DampingProfile, diffs: np.ndarray) -> np.ndarray:
    out = np.zeros(diffs.shape, dtype=np.complex128)
    mask = np.abs(diffs) <= p.k_modes
    out[mask] = p.ghat[diffs[mask] + p.k_modes]
    return out


def apply_gain(p: DampingProfile, v: SpectralField) -> SpectralField:
    """G v = g (v - integral(v g)); output keeps the grown band N + K.

    The output mean vanishes identically because the gain has unit
    integral; the rounding residue is asserted small and zeroed.
    """
    n = v.n_modes
    s = gain_pairing(p, v)
    w = v.coeffs.copy()
    w[n] -= s
    out = np.convolve(p.ghat, w)
    center = n + p.k_modes
    scale = 1.0 + float(np.abs(out).max(initial=0.0))
    if abs(out[center]) > 1e-12 * scale:
        raise ProfileError("gain output mean residue above 1e-12; profile not normalized")
    out[center] = 0.0
    return SpectralField(n + p.k_modes, out)


def _fractional(delta: float):
    return lambda k: np.abs(k).astype(np.float64) ** delta + 0j


def apply_feedback(p: DampingProfile, v: SpectralField) -> SpectralField:
    """The damping feedback G D^delta G v with full intermediate bandwidth."""
    w = apply_gain(p, v)
    w = apply_multiplier(w, _fractional(p.delta))
    return apply_gain(p, w)


def apply_dissipation_part(p: DampingProfile, v: SpectralField) -> SpectralField:
    """Diagonal piece: multiplication by d(k), zero at k = 0."""
    d = p.d_symbol(v.wavenumbers)
    return SpectralField(v.n_modes, d * v.coeffs)


def _smoothing_matrix(p: DampingProfile, n: int) -> np.ndarray:
    """Full double-convolution matrix from input band n to output band n + 2K."""
    key = ("smoothing", n)
    cache = p._cache
    if key not in cache:
        k_out = np.arange(-(n + 2 * p.k_modes), n + 2 * p.k_modes + 1)
        l_mid = np.arange(-(n + p.k_modes), n + p.k_modes + 1)
        n_in = np.arange(-n, n + 1)
        c1 = _ghat_at(p, k_out[:, None] - l_mid[None, :])
        c2 = _ghat_at(p, l_mid[:, None] - n_in[None, :])
        dl = np.abs(l_mid).astype(np.float64) ** p.delta
        cache[key] = c1 @ (dl[:, None] * c2)
    return cache[key]


def apply_smoothing_remainder(p: DampingProfile, v: SpectralField) -> SpectralField:
    """Off-diagonal convolution piece: the n != k part of the g D^delta g sums."""
    n = v.n_modes
    mat = _smoothing_matrix(p, n)
    out = mat @ v.coeffs
    center = n + 2 * p.k_modes
    diag = np.diagonal(mat[center - n : center + n + 1, :])
    out[center - n : center + n + 1] -= diag * v.coeffs
    out[center] = 0.0
    return SpectralField(n + 2 * p.k_modes, out)


def apply_mean_correction(p: DampingProfile, v: SpectralField) -> SpectralField:
    """The four-term mean-interaction remainder of the feedback split.

    Combines the scalar pairings integral(g v), integral(g D^delta (g v)),
    integral(g D^delta g) with the fields g and g D^delta g.  Its k = 0
    coefficient cancels identically.
    """
    n = v.n_modes
    kk = p.k_modes
    s1 = gain_pairing(p, v)
    gv = np.convolve(p.ghat, v.coeffs)
    l_mid = np.arange(-(n + kk), n + kk + 1)
    dgv = np.abs(l_mid).astype(np.float64) ** p.delta * gv
    s2 = _pair_with_gain(p, dgv, n + kk)
    j = np.arange(-kk, kk + 1)
    s3 = float(TWO_PI * np.sum(np.abs(j).astype(np.float64) ** p.delta * np.abs(p.ghat) ** 2))
    gdg = np.convolve(p.ghat, np.abs(j).astype(np.float64) ** p.delta * p.ghat)

    band = 2 * kk
    out = -s1 * gdg
    out[band - kk : band + kk + 1] += (-s2 + s1 * s3) * p.ghat
    out[band] += s2 / TWO_PI
    return SpectralField(band, out)


def decomposition_residual(p: DampingProfile, v: SpectralField) -> float:
    """Relative defect of G D^delta G v against its three-part split."""
    nv = l2_norm(v)
    if nv == 0.0:
        return 0.0
    lhs = apply_feedback(p, v)
    rhs = apply_dissipation_part(p, v) + apply_smoothing_remainder(p, v) + apply_mean_correction(p, v)
    return l2_norm(lhs - rhs) / nv


def dissipation_form(p: DampingProfile, v: SpectralField) -> float:
    """Instantaneous dissipation rate: the squared norm of D^{delta/2} G v.

    Evaluated on the full grown band of G v, which makes it equal (up to
    rounding) to the pairing of G D^delta G v against v.
    """
    gv = apply_gain(p, v)
    weights = np.abs(gv.wavenumbers).astype(np.float64) ** p.delta
    return float(TWO_PI * np.sum(weights * np.abs(gv.coeffs) ** 2))


def dissipation_equivalence(p: DampingProfile, n_max: int) -> tuple:
    """Extremes of d(k) / <k>^delta over 1 <= |k| <= n_max.

    The lower constant is positive for every normalized profile because the
    l = k term alone contributes |k|^delta / (4 pi^2).
    """
    ks = np.arange(1, n_max + 1)
    ratios = p.d_symbol(ks) / (1.0 + ks.astype(np.float64) ** 2) ** (0.5 * p.delta)
    c, big_c = float(ratios.min()), float(ratios.max())
    if c <= 0.0:
        raise ProfileError("degenerate profile: dissipation symbol vanished")
    return c, big_c


def gain_matrix(p: DampingProfile, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Coefficient-space matrix of G from input modes `cols` to output modes `rows`."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    direct = _ghat_at(p, rows[:, None] - cols[None, :])
    correction = TWO_PI * _ghat_at(p, rows)[:, None] * np.conj(_ghat_at(p, cols))[None, :]
    return direct - correction


def feedback_matrix(p: DampingProfile, modes: np.ndarray) -> np.ndarray:
    """Galerkin matrix of G D^delta G on the given modes (full inner band)."""
    modes = np.asarray(modes, dtype=np.int64)
    inner = np.arange(-(np.abs(modes).max() + p.k_modes), np.abs(modes).max() + p.k_modes + 1)
    g_in = gain_matrix(p, inner, modes)
    g_out = gain_matrix(p, modes, inner)
    dl = np.abs(inner).astype(np.float64) ** p.delta
    mat = g_out @ (dl[:, None] * g_in)
    return 0.5 * (mat + mat.conj().T)
