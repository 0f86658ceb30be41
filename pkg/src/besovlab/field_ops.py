"""Spectral fields on the periodic box and the operators acting on them.

A field is stored through its Fourier coefficients on the real-FFT half
lattice, normalised so that ``u(x) = sum_k c_k exp(i k.x)``.  Nyquist planes
are kept at zero: on the symmetric band ``|k_i| < n/2`` every multiplier
(derivatives, Riesz transforms, Hodge projectors) is exact and preserves the
Hermitian symmetry of real fields.
"""
import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Grid",
    "SpectralField",
    "VectorDecomposition",
    "MeanError",
    "from_physical",
    "zeros",
    "stack",
    "lp_norm",
    "l2_norm",
    "grad",
    "div",
    "curl",
    "laplacian",
    "inv_neg_laplacian",
    "lambda_pow",
    "hodge",
    "effective_velocity",
    "deformation",
    "multiply",
    "pointwise",
    "dealias",
    "random_field",
    "resample",
    "hermitian_part",
    "save_snapshot",
    "load_snapshot",
]

MEAN_TOL = 1e-12


class MeanError(ValueError):
    """Raised when an operation needs a mean-zero field and gets something else."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid on the box [0, box_length)^d with n points per axis."""

    d: int
    n: int
    box_length: float = 2 * np.pi

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if not (np.isfinite(self.box_length) and self.box_length > 0):
            raise ValueError(f"box_length must be positive, got {self.box_length}")
        object.__setattr__(self, "box_length", float(self.box_length))

    @property
    def shape(self):
        return (self.n,) * self.d

    @property
    def spectral_shape(self):
        return (self.n,) * (self.d - 1) + (self.n // 2 + 1,)

    @property
    def axes(self):
        return tuple(range(-self.d, 0))

    @property
    def cell_volume(self):
        return (self.box_length / self.n) ** self.d

    @property
    def volume(self):
        return self.box_length**self.d

    @property
    def k0(self):
        """Smallest nonzero wavenumber 2*pi/L."""
        return 2 * np.pi / self.box_length

    @cached_property
    def index(self):
        """Integer lattice indices, shape (d, *spectral_shape)."""
        full = np.fft.fftfreq(self.n, 1.0 / self.n)
        half = np.fft.rfftfreq(self.n, 1.0 / self.n)
        axes = [full] * (self.d - 1) + [half]
        return np.array(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def resolved(self):
        """False on Nyquist planes."""
        return np.all(np.abs(self.index) < self.n // 2, axis=0)

    @cached_property
    def wavevector(self):
        return self.k0 * self.index * self.resolved

    @cached_property
    def kabs(self):
        return np.sqrt(np.sum(self.wavevector**2, axis=0))

    @cached_property
    def khat(self):
        """Unit wavevector, zero at the mean mode."""
        k = self.kabs
        safe = np.where(k > 0, k, 1.0)
        return np.where(k > 0, self.wavevector / safe, 0.0)

    @cached_property
    def hermitian_weight(self):
        """Multiplicity of each stored coefficient in full-lattice sums."""
        w = np.full(self.spectral_shape, 2.0)
        w[..., 0] = 1.0
        return w * self.resolved

    @cached_property
    def dealias_mask(self):
        """2/3 rule: keep |k_i| <= n/3 on every axis."""
        return np.all(np.abs(self.index) <= self.n // 3, axis=0) & self.resolved

    @property
    def kmax(self):
        return float(self.kabs.max())

    def points(self):
        x = np.arange(self.n) * (self.box_length / self.n)
        return np.array(np.meshgrid(*([x] * self.d), indexing="ij"))


def hermitian_part(c, d):
    # only the k_d = 0 plane carries redundant information in rfft storage
    plane = c[..., 0]
    axes = tuple(range(plane.ndim - (d - 1), plane.ndim))
    mirror = np.roll(np.flip(plane, axis=axes), 1, axis=axes)
    out = c.copy()
    out[..., 0] = 0.5 * (plane + np.conj(mirror))
    return out


class SpectralField:
    """Real field on a periodic grid, held as normalised Fourier coefficients.

    ``coeffs`` has shape ``rank_shape + grid.spectral_shape`` where the rank
    shape is ``()`` for scalars, ``(d,)`` for vectors and ``(d, d)`` for
    tensors; any ``(m,)`` is accepted as a plain stack of components.
    """

    __slots__ = ("grid", "coeffs")

    def __init__(self, grid, coeffs):
        coeffs = np.asarray(coeffs, dtype=complex)
        d = grid.d
        if coeffs.shape[coeffs.ndim - d:] != grid.spectral_shape:
            raise ValueError(
                f"coefficient shape {coeffs.shape} does not fit grid {grid.spectral_shape}")
        lead = coeffs.shape[:coeffs.ndim - d]
        if not (len(lead) <= 1 or lead == (d, d)):
            raise ValueError(f"unsupported component shape {lead}")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("non-finite Fourier coefficients")
        self.grid = grid
        self.coeffs = coeffs * grid.resolved

    @classmethod
    def from_coefficients(cls, grid, coeffs, tol=1e-12):
        """Validated constructor for externally supplied coefficients."""
        field = cls(grid, coeffs)
        sym = hermitian_part(field.coeffs, grid.d)
        scale = max(np.abs(field.coeffs).max(initial=0.0), 1.0)
        if np.abs(sym - field.coeffs).max(initial=0.0) > tol * scale:
            raise ValueError("coefficients are not Hermitian symmetric")
        return cls(grid, sym)

    # ---- structure -------------------------------------------------
    @property
    def rank_shape(self):
        return self.coeffs.shape[:self.coeffs.ndim - self.grid.d]

    @property
    def components(self):
        return int(np.prod(self.rank_shape, dtype=int))

    @property
    def is_scalar(self):
        return self.rank_shape == ()

    @property
    def is_vector(self):
        return self.rank_shape == (self.grid.d,)

    def __getitem__(self, i):
        if self.is_scalar:
            raise TypeError("scalar field has no components")
        return SpectralField(self.grid, self.coeffs[i])

    def physical(self):
        return np.fft.irfftn(self.coeffs, s=self.grid.shape, axes=self.grid.axes,
                             norm="forward")

    def mean(self):
        return self.coeffs[(...,) + (0,) * self.grid.d].real

    def has_zero_mean(self, tol=MEAN_TOL):
        scale = np.abs(self.coeffs).max(initial=0.0)
        return bool(np.all(np.abs(self.mean()) <= tol * max(scale, 1e-300)))

    def zero_mean(self):
        c = self.coeffs.copy()
        c[(...,) + (0,) * self.grid.d] = 0.0
        return SpectralField(self.grid, c)

    def require_zero_mean(self, what="field"):
        if not self.has_zero_mean():
            raise MeanError(f"{what} must have zero mean (mean = {self.mean()})")

    def apply(self, multiplier):
        """Fourier multiplier, broadcast over components."""
        return SpectralField(self.grid, self.coeffs * multiplier)

    def copy(self):
        return SpectralField(self.grid, self.coeffs.copy())

    # ---- arithmetic ---------------------------------------------------
    def _other(self, other):
        if isinstance(other, SpectralField):
            if other.grid != self.grid:
                raise ValueError("grid mismatch")
            return other.coeffs
        return NotImplemented

    def __add__(self, other):
        c = self._other(other)
        if c is NotImplemented:
            return c
        return SpectralField(self.grid, self.coeffs + c)

    def __sub__(self, other):
        c = self._other(other)
        if c is NotImplemented:
            return c
        return SpectralField(self.grid, self.coeffs - c)

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)

    def __mul__(self, scalar):
        if isinstance(scalar, SpectralField):
            return NotImplemented
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SpectralField(self.grid, self.coeffs / scalar)

    def __repr__(self):
        g = self.grid
        return f"SpectralField(d={g.d}, n={g.n}, rank_shape={self.rank_shape})"


@dataclass(frozen=True)
class VectorDecomposition:
    p_part: SpectralField
    q_part: SpectralField
    omega: SpectralField
    v: SpectralField


def from_physical(grid, values):
    values = np.asarray(values, dtype=float)
    if values.shape[values.ndim - grid.d:] != grid.shape:
        raise ValueError(f"sample shape {values.shape} does not fit grid {grid.shape}")
    return SpectralField(grid, np.fft.rfftn(values, axes=grid.axes, norm="forward"))


def zeros(grid, rank_shape=()):
    return SpectralField(grid, np.zeros(tuple(rank_shape) + grid.spectral_shape, complex))


def stack(fields):
    grid = fields[0].grid
    for f in fields:
        if f.grid != grid:
            raise ValueError("grid mismatch")
    return SpectralField(grid, np.stack([f.coeffs for f in fields]))


def _pointwise_magnitude(values, grid):
    lead = values.ndim - grid.d
    if lead == 0:
        return np.abs(values)
    return np.sqrt(np.sum(values**2, axis=tuple(range(lead))))


def lp_norm(values, grid, p):
    """Rectangle-rule L^p norm of physical samples; vectors use the Euclidean modulus."""
    m = _pointwise_magnitude(np.asarray(values), grid)
    if p == np.inf:
        return float(m.max())
    return float((grid.cell_volume * np.sum(m**p)) ** (1.0 / p))


def l2_norm(field):
    """L^2 norm from the coefficients (Plancherel)."""
    g = field.grid
    s = np.sum(g.hermitian_weight * np.abs(field.coeffs) ** 2)
    return float(np.sqrt(g.volume * s))


# ---- differential and nonlocal operators ---------------------------------
def grad(f):
    """Gradient; for a vector u returns J with J[i, j] = d_j u_i."""
    k = f.grid.wavevector
    if f.is_scalar:
        return SpectralField(f.grid, 1j * k * f.coeffs)
    if f.is_vector:
        return SpectralField(f.grid, 1j * k[None, :] * f.coeffs[:, None])
    raise TypeError("gradient of a tensor field is not supported")


def div(u):
    """Divergence of a vector, or row-wise divergence of a tensor."""
    k = u.grid.wavevector
    if u.is_vector:
        return SpectralField(u.grid, np.sum(1j * k * u.coeffs, axis=0))
    if u.rank_shape == (u.grid.d, u.grid.d):
        return SpectralField(u.grid, np.sum(1j * k[None] * u.coeffs, axis=1))
    raise TypeError("divergence needs a vector or tensor field")


def curl(u):
    """Scalar d1 u2 - d2 u1 in 2D, the usual vector curl in 3D."""
    if not u.is_vector:
        raise TypeError("curl needs a vector field")
    k = u.grid.wavevector
    c = u.coeffs
    if u.grid.d == 2:
        return SpectralField(u.grid, 1j * (k[0] * c[1] - k[1] * c[0]))
    out = np.stack([
        1j * (k[1] * c[2] - k[2] * c[1]),
        1j * (k[2] * c[0] - k[0] * c[2]),
        1j * (k[0] * c[1] - k[1] * c[0]),
    ])
    return SpectralField(u.grid, out)


def laplacian(f):
    return f.apply(-f.grid.kabs**2)


def _inverse_power(grid, s):
    k = grid.kabs
    safe = np.where(k > 0, k, 1.0)
    return np.where(k > 0, safe**s, 0.0)


def inv_neg_laplacian(f):
    """(-Delta)^{-1} with the zero mode mapped to zero; needs mean-zero input."""
    f.require_zero_mean()
    return f.apply(_inverse_power(f.grid, -2.0))


def lambda_pow(f, s):
    """Lambda^s = |D|^s.  The mean mode is sent to zero."""
    if s < 0:
        f.require_zero_mean()
    return f.apply(_inverse_power(f.grid, float(s)))


def hodge(u):
    """Split u = Pu + Qu into divergence-free and gradient parts.

    Qu = grad Delta^{-1} div u, omega = Lambda^{-1} curl u, v = Lambda^{-1} div u.
    """
    if not u.is_vector:
        raise TypeError("hodge needs a vector field")
    u.require_zero_mean("velocity")
    kh = u.grid.khat
    along = np.sum(kh * u.coeffs, axis=0)
    q = SpectralField(u.grid, kh * along)
    p = u - q
    inv = _inverse_power(u.grid, -1.0)
    return VectorDecomposition(p, q, curl(u).apply(inv), div(u).apply(inv))


def effective_velocity(a, u):
    """w = grad (-Delta)^{-1} (a - div u)."""
    a.require_zero_mean("density perturbation")
    return grad(inv_neg_laplacian(a - div(u)))


def deformation(u):
    """Symmetric gradient D(u) = (J + J^T)/2."""
    j = grad(u).coeffs
    return SpectralField(u.grid, 0.5 * (j + np.swapaxes(j, 0, 1)))


# ---- pointwise nonlinearities -------------------------------------------
def dealias(f):
    return f.apply(f.grid.dealias_mask)


def multiply(f, g, dealiased=False):
    """Pointwise product; vector times scalar broadcasts, two vectors give the dot product."""
    if f.grid != g.grid:
        raise ValueError("grid mismatch")
    x, y = f.physical(), g.physical()
    if f.is_vector and g.is_vector:
        prod = np.sum(x * y, axis=0)
    elif f.is_scalar or g.is_scalar:
        if f.is_scalar and not g.is_scalar:
            x = x.reshape((1,) * len(g.rank_shape) + x.shape)
        if g.is_scalar and not f.is_scalar:
            y = y.reshape((1,) * len(f.rank_shape) + y.shape)
        prod = x * y
    else:
        raise TypeError("unsupported operand ranks for a pointwise product")
    out = from_physical(f.grid, prod)
    return dealias(out) if dealiased else out


def pointwise(func, f, dealiased=False):
    """Evaluate a composition F(f) sample by sample."""
    out = from_physical(f.grid, func(f.physical()))
    return dealias(out) if dealiased else out


# ---- random fields -------------------------------------------------------
def random_field(grid, rng, band=(0.0, np.inf), rank_shape=(), mask=None):
    """Complex Gaussian coefficients on ``band[0] <= |k| <= band[1]``, Hermitian-symmetrised.

    The result is mean zero and carries unit L^2 norm unless the band holds no
    lattice modes, in which case the zero field is returned.
    """
    shape = tuple(rank_shape) + grid.spectral_shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    k = grid.kabs
    keep = (k >= band[0]) & (k <= band[1]) & (k > 0) & grid.resolved
    if mask is not None:
        keep &= mask
    c = hermitian_part(c * keep, grid.d)
    f = SpectralField(grid, c)
    nrm = l2_norm(f)
    return f / nrm if nrm > 0 else f


def resample(field, n):
    """Same function on an n-point grid: zero-pad or truncate the coefficients.

    Truncation drops every mode outside the symmetric band of the new grid.
    """
    g = field.grid
    new = Grid(g.d, n, g.box_length)
    idx = g.index
    keep = g.resolved & np.all(np.abs(idx) < n // 2, axis=0)
    dst = tuple(idx[i][keep].astype(int) % n for i in range(g.d - 1)) + (idx[-1][keep].astype(int),)
    lead = field.coeffs.shape[: field.coeffs.ndim - g.d]
    out = np.zeros(lead + new.spectral_shape, complex)
    out[(Ellipsis,) + dst] = field.coeffs[(Ellipsis, keep)]
    return SpectralField(new, out)


# ---- snapshots -----------------------------------------------------------
def save_snapshot(path, field, time=0.0):
    """One JSON header line, then little-endian float64 samples in row-major order."""
    g = field.grid
    if not (field.is_scalar or field.is_vector):
        raise TypeError("snapshots hold scalar or vector fields")
    header = {
        "dimension": g.d,
        "n": g.n,
        "box_length": g.box_length,
        "components": field.components,
        "time": float(time),
        "endianness": "little",
    }
    data = np.ascontiguousarray(field.physical(), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        fh.write(data.tobytes(order="C"))


def load_snapshot(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        raw = fh.read()
    if header.get("endianness") != "little":
        raise ValueError("unsupported endianness tag")
    g = Grid(int(header["dimension"]), int(header["n"]), float(header["box_length"]))
    comps = int(header["components"])
    shape = g.shape if comps == 1 else (comps,) + g.shape
    values = np.frombuffer(raw, dtype="<f8")
    if values.size != int(np.prod(shape)):
        raise ValueError("snapshot payload size does not match header")
    return from_physical(g, values.reshape(shape)), float(header["time"])
