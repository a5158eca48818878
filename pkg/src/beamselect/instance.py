"""Problem instances, channel generation, SINR evaluation and instance files.

The channel matrix ``H`` is ``N x M`` with column ``m`` holding the channel
``h_m`` of user ``m``.  A beamformer matrix ``W`` has the same shape, column
``m`` being the beamformer ``w_m``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DimensionMismatchError, ParseError, UsageError

PERFECT = "perfect"
ROBUST = "robust"

_FILE_MAGIC = "# beamselect-instance v1"


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def _as_tuple(value, m, name):
    arr = np.broadcast_to(np.asarray(value, dtype=float), (m,))
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class InstanceConfig:
    n_antennas: int
    n_users: int
    budget: int
    noise_vars: tuple
    sinr_targets: tuple
    uncertainty_radii: tuple
    csi_mode: str = PERFECT
    seed: int = 0

    def __post_init__(self):
        n, m, l = self.n_antennas, self.n_users, self.budget
        for name, v in (("n_antennas", n), ("n_users", m), ("budget", l)):
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {v!r}")
        if l > n:
            raise ConfigurationError(f"budget L={l} exceeds antenna count N={n}")
        for name in ("noise_vars", "sinr_targets", "uncertainty_radii"):
            vals = getattr(self, name)
            if len(vals) != m:
                raise ConfigurationError(f"{name} needs {m} entries, got {len(vals)}")
            if not all(math.isfinite(v) for v in vals):
                raise ConfigurationError(f"{name} must be finite")
        if min(self.noise_vars) <= 0 or min(self.sinr_targets) <= 0:
            raise ConfigurationError("noise variances and SINR targets must be positive")
        if min(self.uncertainty_radii) < 0:
            raise ConfigurationError("uncertainty radii must be nonnegative")
        if self.csi_mode not in (PERFECT, ROBUST):
            raise ConfigurationError(f"unknown csi_mode {self.csi_mode!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")

    @classmethod
    def uniform(cls, n, m, l, gamma=1.0, sigma2=1.0, eps=0.0, csi_mode=None, seed=0):
        """Config with identical per-user parameters.

        ``csi_mode`` defaults to robust when ``eps > 0`` and perfect otherwise.
        """
        if csi_mode is None:
            csi_mode = ROBUST if np.any(np.asarray(eps) > 0) else PERFECT
        return cls(
            n_antennas=int(n),
            n_users=int(m),
            budget=int(l),
            noise_vars=_as_tuple(sigma2, m, "noise_vars"),
            sinr_targets=_as_tuple(gamma, m, "sinr_targets"),
            uncertainty_radii=_as_tuple(eps, m, "uncertainty_radii"),
            csi_mode=csi_mode,
            seed=int(seed),
        )

    def with_seed(self, seed):
        from dataclasses import replace

        return replace(self, seed=int(seed))

    @property
    def sigma2(self):
        return np.asarray(self.noise_vars)

    @property
    def gamma(self):
        return np.asarray(self.sinr_targets)

    @property
    def eps(self):
        """Effective uncertainty radii (all zero under perfect CSI)."""
        if self.csi_mode == PERFECT:
            return np.zeros(self.n_users)
        return np.asarray(self.uncertainty_radii)

    @property
    def robust(self):
        return self.csi_mode == ROBUST


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    config: InstanceConfig
    H: np.ndarray = field(repr=False)

    def __post_init__(self):
        H = np.asarray(self.H, dtype=complex)
        c = self.config
        if H.shape != (c.n_antennas, c.n_users):
            raise ConfigurationError(
                f"channel has shape {H.shape}, expected {(c.n_antennas, c.n_users)}"
            )
        if not np.all(np.isfinite(H)):
            raise ConfigurationError("channel entries must be finite")
        H.setflags(write=False)
        object.__setattr__(self, "H", H)

    def __eq__(self, other):
        if not isinstance(other, ProblemInstance):
            return NotImplemented
        return self.config == other.config and np.array_equal(self.H, other.H)

    __hash__ = None

    @property
    def N(self):
        return self.config.n_antennas

    @property
    def M(self):
        return self.config.n_users

    @property
    def L(self):
        return self.config.budget


def generate_instance(config: InstanceConfig) -> ProblemInstance:
    """Draw an i.i.d. Rayleigh channel; real and imaginary parts are N(0, 1/2)."""
    rng = np.random.default_rng(config.seed)
    shape = (config.n_antennas, config.n_users)
    H = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return ProblemInstance(config, H)


def evaluate_sinr(W, inst: ProblemInstance) -> np.ndarray:
    W = np.asarray(W, dtype=complex)
    if W.shape != inst.H.shape:
        raise UsageError(f"beamformer shape {W.shape} does not match channel {inst.H.shape}")
    # G[l, m] = w_l^H h_m
    G = np.abs(W.conj().T @ inst.H) ** 2
    signal = np.diag(G)
    interference = G.sum(axis=0) - signal
    return signal / (interference + inst.config.sigma2)


def row_powers(W) -> np.ndarray:
    return np.sum(np.abs(np.asarray(W)) ** 2, axis=1)


def row_support(W, tol=0.0) -> frozenset:
    p = row_powers(W)
    return frozenset(int(i) for i in np.flatnonzero(p > tol))


def robust_lmi(Q, h, sigma2, eps, t):
    """S-procedure matrix for ``min_{|e|<=eps} (h+e)^H Q (h+e) >= sigma2``."""
    n = Q.shape[0]
    Qh = Q @ h
    top = np.hstack([Q + t * np.eye(n), Qh[:, None]])
    corner = np.real(h.conj() @ Qh) - sigma2 - t * eps**2
    bottom = np.hstack([Qh.conj()[None, :], np.array([[corner]])])
    return np.vstack([top, bottom])


def _min_eig(A):
    A = 0.5 * (A + A.conj().T)
    return float(np.linalg.eigvalsh(A)[0])


def worst_case_margin(W, inst: ProblemInstance, m: int, tol=1e-9) -> float:
    """Largest attainable minimum eigenvalue of the S-procedure LMI for user ``m``.

    The minimum eigenvalue is concave in the multiplier, so a golden-section
    search over ``[0, t_max]`` finds its maximum.
    """
    W = np.asarray(W, dtype=complex)
    gamma = inst.config.gamma[m]
    sigma2 = inst.config.sigma2[m]
    eps = inst.config.eps[m]
    h = inst.H[:, m]
    Wm = np.outer(W[:, m], W[:, m].conj())
    others = W @ W.conj().T - Wm
    Q = Wm / gamma - others
    if eps == 0.0:
        return float(np.real(h.conj() @ Q @ h)) - sigma2
    f = lambda t: _min_eig(robust_lmi(Q, h, sigma2, eps, t))
    lo, hi = 0.0, 1e3 * (np.linalg.norm(Q, 2) + 1.0)
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo + (1 - invphi) * (hi - lo), lo + invphi * (hi - lo)
    fa, fb = f(a), f(b)
    best = max(f(lo), fa, fb)
    for _ in range(200):
        if abs(fa - fb) <= tol and hi - lo <= 1e-9 * (1.0 + hi):
            break
        if fa < fb:
            lo, a, fa = a, b, fb
            b = lo + invphi * (hi - lo)
            fb = f(b)
        else:
            hi, b, fb = b, a, fa
            a = lo + (1 - invphi) * (hi - lo)
            fa = f(a)
        best = max(best, fa, fb)
    return best


def robust_sinr_certificate(W, inst: ProblemInstance, m: int, rtol=1e-7) -> bool:
    """True iff the worst-case SINR of user ``m`` over its uncertainty ball is >= target.

    A small tolerance relative to the problem scale absorbs interior-point
    residuals on solutions where the constraint is active.
    """
    if not inst.config.robust:
        raise UsageError("robust certificate requires a robust-CSI instance")
    W = np.asarray(W, dtype=complex)
    scale = inst.config.sigma2[m] + np.sum(np.abs(W) ** 2) * (
        np.linalg.norm(inst.H[:, m]) + inst.config.eps[m]
    ) ** 2
    return worst_case_margin(W, inst, m) >= -rtol * scale


# ---------------------------------------------------------------------------
# instance files


def save_instance(inst: ProblemInstance, path) -> None:
    c = inst.config

    def vec(v):
        return " ".join(repr(float(x)) for x in v)

    lines = [
        _FILE_MAGIC,
        f"N = {c.n_antennas}",
        f"M = {c.n_users}",
        f"L = {c.budget}",
        f"sigma2 = {vec(c.noise_vars)}",
        f"gamma = {vec(c.sinr_targets)}",
        f"eps = {vec(c.uncertainty_radii)}",
        f"csi_mode = {c.csi_mode}",
        f"seed = {c.seed}",
        "channel",
    ]
    for i in range(c.n_antennas):
        for j in range(c.n_users):
            z = inst.H[i, j]
            lines.append(f"{i} {j} {float(z.real)!r} {float(z.imag)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


_HEADER_KEYS = ("N", "M", "L", "sigma2", "gamma", "eps", "csi_mode", "seed")


def load_instance(path) -> ProblemInstance:
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or lines[0].strip() != _FILE_MAGIC:
        raise ParseError("missing instance file header", line=1)
    header = {}
    pos = 1
    while pos < len(lines) and lines[pos].strip() != "channel":
        raw = lines[pos]
        if "=" not in raw:
            raise ParseError(f"expected 'key = value', got {raw!r}", line=pos + 1)
        key, _, value = raw.partition("=")
        header[key.strip()] = (value.strip(), pos + 1)
        pos += 1
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise ParseError(f"truncated header, missing {missing}", line=pos + 1)
    if pos >= len(lines):
        raise ParseError("truncated file: no channel section", line=pos + 1)

    def parse(key, conv):
        value, lineno = header[key]
        try:
            return conv(value)
        except ValueError as exc:
            raise ParseError(f"bad value for {key}: {exc}", line=lineno) from None

    floats = lambda s: tuple(float(x) for x in s.split())
    n, m, l = parse("N", int), parse("M", int), parse("L", int)
    try:
        config = InstanceConfig(
            n_antennas=n,
            n_users=m,
            budget=l,
            noise_vars=parse("sigma2", floats),
            sinr_targets=parse("gamma", floats),
            uncertainty_radii=parse("eps", floats),
            csi_mode=parse("csi_mode", str),
            seed=parse("seed", int),
        )
    except ConfigurationError as exc:
        raise ParseError(f"invalid header: {exc}", line=pos) from None

    H = np.zeros((n, m), dtype=complex)
    seen = np.zeros((n, m), dtype=bool)
    count = 0
    for k, raw in enumerate(lines[pos + 1 :], start=pos + 2):
        if not raw.strip():
            continue
        parts = raw.split()
        if len(parts) != 4:
            raise ParseError(f"expected 'i j re im', got {raw!r}", line=k, offset=len(raw))
        try:
            i, j = int(parts[0]), int(parts[1])
            re_, im_ = float(parts[2]), float(parts[3])
        except ValueError as exc:
            raise ParseError(f"bad channel entry: {exc}", line=k) from None
        if not (0 <= i < n and 0 <= j < m):
            raise DimensionMismatchError(f"entry ({i}, {j}) outside {n}x{m}", line=k)
        if seen[i, j]:
            raise ParseError(f"duplicate entry ({i}, {j})", line=k)
        seen[i, j] = True
        H[i, j] = complex(re_, im_)
        count += 1
    if count != n * m:
        raise DimensionMismatchError(f"found {count} channel entries, expected {n * m}")
    return ProblemInstance(config, H)
