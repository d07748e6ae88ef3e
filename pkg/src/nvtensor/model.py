"""Physical model of a driven, dipolar-coupled NV ensemble.

Energies and frequencies are angular frequencies in rad/us, so a quoted
"2pi x f MHz" is stored as ``2*pi*f``. Distances are in nm, times in us.

Superoperators act on row-major vectorized density matrices,
``vec(rho) = rho.reshape(-1)``, for which ``vec(A rho B) = kron(A, B.T) vec(rho)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * np.pi


def mhz(f: float) -> float:
    """Convert a frequency in MHz to angular units (rad/us)."""
    return TWO_PI * f


@dataclass(frozen=True)
class PhysicalConstants:
    """Zero-field splitting, dipolar constant and gyromagnetic prefactor.

    ``gs_muB`` is in rad/us per mT and is only used to convert a field in mT
    into the Zeeman frequency ``gs*muB*Bz``.
    """

    D: float = mhz(2870.0)
    J0: float = mhz(52.0)
    gs_muB: float = mhz(28.024951)

    def zeeman_from_field(self, bz_mT: float) -> float:
        return self.gs_muB * bz_mT


class InteractionForm(str, enum.Enum):
    EFFECTIVE = "effective"
    LAB_FRAME = "lab_frame"


@dataclass(frozen=True)
class NVSiteParams:
    """Drive and field parameters of one NV.

    Attributes:
        zeeman: gs*muB*Bz in rad/us.
        rabi: Rabi frequency Omega in rad/us.
        drive: microwave frequency omega in rad/us.
    """

    zeeman: float
    rabi: float
    drive: float

    def __post_init__(self):
        if self.rabi < 0:
            raise ValueError(f"Rabi frequency must be non-negative, got {self.rabi}")

    @classmethod
    def resonant(cls, zeeman: float, rabi: float, constants: PhysicalConstants | None = None):
        """Drive tuned to the |0> <-> |-1> transition, omega = D - gs*muB*Bz."""
        constants = constants or PhysicalConstants()
        return cls(zeeman=zeeman, rabi=rabi, drive=constants.D - zeeman)


@dataclass(frozen=True, eq=False)
class Geometry:
    positions: np.ndarray
    axes: np.ndarray

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        axes = np.atleast_2d(np.asarray(self.axes, dtype=float))
        if pos.shape != axes.shape or pos.shape[1] != 3:
            raise ValueError("positions and axes must both have shape (n, 3)")
        if not np.allclose(np.linalg.norm(axes, axis=1), 1.0, atol=1e-12, rtol=0):
            raise ValueError("NV axes must be unit vectors")
        n = len(pos)
        for i in range(n):
            for j in range(i + 1, n):
                if np.linalg.norm(pos[i] - pos[j]) <= 0:
                    raise ValueError(f"sites {i} and {j} coincide")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "axes", axes)

    @property
    def n_sites(self) -> int:
        return len(self.positions)

    @classmethod
    def chain(cls, n: int, spacing: float, axis=(1.0, 1.0, 1.0)) -> "Geometry":
        """Chain in the xy-plane with site i at spacing*(i, i, 0)/sqrt(2)."""
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        idx = np.arange(n, dtype=float)
        positions = spacing * np.stack([idx, idx, np.zeros(n)], axis=1) / np.sqrt(2.0)
        return cls(positions, np.tile(axis, (n, 1)))

    def separation(self, i: int, j: int) -> tuple[float, np.ndarray]:
        """Distance r_ij and unit vector from site i to site j."""
        d = self.positions[j] - self.positions[i]
        r = float(np.linalg.norm(d))
        return r, d / r


class DissipatorKind(str, enum.Enum):
    DEPHASING = "dephasing"  # L = Sz
    LOWERING = "lowering"  # L = S-
    RAISING = "raising"  # L = S+


@dataclass(frozen=True)
class DissipatorSpec:
    site: int
    rate: float
    operator: DissipatorKind = DissipatorKind.DEPHASING

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"dissipation rate must be non-negative, got {self.rate}")

    def matrix(self) -> np.ndarray:
        sx, sy, sz = spin1_operators()
        if self.operator == DissipatorKind.DEPHASING:
            return sz
        if self.operator == DissipatorKind.LOWERING:
            return sx - 1j * sy
        return sx + 1j * sy


@dataclass(frozen=True, eq=False)
class ModelSpec:
    sites: tuple[NVSiteParams, ...]
    geometry: Geometry
    dissipators: tuple[DissipatorSpec, ...] = ()
    interaction_form: InteractionForm = InteractionForm.EFFECTIVE
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    interactions: bool = True

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        object.__setattr__(self, "dissipators", tuple(self.dissipators))
        object.__setattr__(self, "interaction_form", InteractionForm(self.interaction_form))
        if len(self.sites) != self.geometry.n_sites:
            raise ValueError(
                f"{len(self.sites)} site parameter sets for {self.geometry.n_sites} positions"
            )
        for d in self.dissipators:
            if not 0 <= d.site < len(self.sites):
                raise ValueError(f"dissipator on site {d.site} out of range")

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @classmethod
    def chain(
        cls,
        n: int,
        spacing: float,
        *,
        gamma: float = 0.0,
        rabi: float = mhz(2.0),
        splitting: float = mhz(407.0),
        interaction_form: InteractionForm | str = InteractionForm.EFFECTIVE,
        constants: PhysicalConstants | None = None,
        interactions: bool = True,
        zeeman_shift: float = 0.0,
    ) -> "ModelSpec":
        """Uniform resonantly driven chain with Sz dephasing on every site.

        ``splitting`` is the |+1>/|-1> splitting 2*gs*muB*Bz. ``zeeman_shift``
        offsets gs*muB*Bz while keeping the drive at the unshifted resonance;
        it is the knob used for field derivatives.
        """
        constants = constants or PhysicalConstants()
        zeeman = 0.5 * splitting
        site = NVSiteParams(zeeman=zeeman + zeeman_shift, rabi=rabi, drive=constants.D - zeeman)
        dissipators = tuple(DissipatorSpec(i, gamma) for i in range(n)) if gamma > 0 else ()
        return cls(
            sites=(site,) * n,
            geometry=Geometry.chain(n, spacing),
            dissipators=dissipators,
            interaction_form=interaction_form,
            constants=constants,
            interactions=interactions,
        )

    def with_zeeman_shift(self, shift: float) -> "ModelSpec":
        """Same model with every gs*muB*Bz shifted and drive frequencies held fixed."""
        sites = tuple(
            NVSiteParams(zeeman=s.zeeman + shift, rabi=s.rabi, drive=s.drive) for s in self.sites
        )
        return ModelSpec(
            sites=sites,
            geometry=self.geometry,
            dissipators=self.dissipators,
            interaction_form=self.interaction_form,
            constants=self.constants,
            interactions=self.interactions,
        )


# ---------------------------------------------------------------------------
# single-site and pair operators


def spin1_operators() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spin-1 matrices in the basis (|+1>, |0>, |-1>)."""
    s = 1.0 / np.sqrt(2.0)
    sx = s * np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex)
    sy = s * 1j * np.array([[0, -1, 0], [1, 0, -1], [0, 1, 0]], dtype=complex)
    sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    return sx, sy, sz


def basis_state(m: int) -> np.ndarray:
    """Ket |m> for m in {+1, 0, -1}."""
    v = np.zeros(3, dtype=complex)
    v[1 - m] = 1.0
    return v


def single_site_hamiltonian(params: NVSiteParams, constants: PhysicalConstants | None = None):
    """Rotating-frame RWA Hamiltonian (D - omega) Sz^2 + gs*muB*Bz Sz + (Omega/2) Sx."""
    constants = constants or PhysicalConstants()
    sx, _, sz = spin1_operators()
    return (
        (constants.D - params.drive) * sz @ sz
        + params.zeeman * sz
        + 0.5 * params.rabi * sx
    )


def dipole_coupling_constant(geometry: Geometry, i: int, j: int, constants=None):
    """Return ``(C_dip, q_ij)`` with q_ij = 3(r.z_i)(r.z_j) - z_i.z_j and C_dip = J0 q / r^3."""
    if i == j:
        raise ValueError("dipolar coupling needs two distinct sites")
    constants = constants or PhysicalConstants()
    r, rhat = geometry.separation(i, j)
    zi, zj = geometry.axes[i], geometry.axes[j]
    q = 3.0 * (rhat @ zi) * (rhat @ zj) - zi @ zj
    return constants.J0 * q / r**3, float(q)


def effective_pair_term(i: int, j: int, geometry: Geometry, constants=None) -> np.ndarray:
    """Secular dipolar term C_dip [ (SxSx + SySy)/2 - SzSz ] on sites (i, j)."""
    c, _ = dipole_coupling_constant(geometry, i, j, constants)
    sx, sy, sz = spin1_operators()
    return c * (0.5 * (np.kron(sx, sx) + np.kron(sy, sy)) - np.kron(sz, sz))


def local_frame(axis: np.ndarray) -> np.ndarray:
    """Rows are the NV frame unit vectors (x, y, z) with z along ``axis``."""
    z = np.asarray(axis, dtype=float)
    z = z / np.linalg.norm(z)
    ref = np.eye(3)[int(np.argmin(np.abs(z)))]
    x = ref - (ref @ z) * z
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.stack([x, y, z])


def lab_frame_pair_term(i: int, j: int, geometry: Geometry, constants=None) -> np.ndarray:
    """Full dipole-dipole term -(J0/r^3) [3 (S_i.r)(S_j.r) - S_i.S_j].

    Each spin's components are taken in its own NV frame, so for parallel
    axes the secular part reproduces :func:`effective_pair_term`.
    """
    if i == j:
        raise ValueError("dipolar coupling needs two distinct sites")
    constants = constants or PhysicalConstants()
    r, rhat = geometry.separation(i, j)
    fi, fj = local_frame(geometry.axes[i]), local_frame(geometry.axes[j])
    spins = spin1_operators()
    # coupling[a, b] multiplies S_i^a S_j^b
    coupling = 3.0 * np.outer(fi @ rhat, fj @ rhat) - fi @ fj.T
    h = sum(coupling[a, b] * np.kron(spins[a], spins[b]) for a in range(3) for b in range(3))
    return -(constants.J0 / r**3) * h


def pair_hamiltonian(model: ModelSpec, i: int, j: int) -> np.ndarray:
    if model.interaction_form == InteractionForm.LAB_FRAME:
        return lab_frame_pair_term(i, j, model.geometry, model.constants)
    return effective_pair_term(i, j, model.geometry, model.constants)


def dense_hamiltonian(model: ModelSpec) -> np.ndarray:
    """Full 3^N x 3^N Hamiltonian built from Kronecker products."""
    n = model.n_sites
    dim = 3**n
    h = np.zeros((dim, dim), dtype=complex)
    for s, params in enumerate(model.sites):
        h += embed([single_site_hamiltonian(params, model.constants)], [s], n, 3)
    if model.interactions:
        for i in range(n):
            for j in range(i + 1, n):
                h += embed_pair(pair_hamiltonian(model, i, j), i, j, n, 3)
    return h


def embed(ops, sites, n: int, d: int) -> np.ndarray:
    """Kronecker product of single-site ``ops`` on ``sites`` with identities elsewhere."""
    factors = [np.eye(d)] * n
    for op, s in zip(ops, sites):
        factors[s] = op
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    return out


def embed_pair(op2: np.ndarray, i: int, j: int, n: int, d: int) -> np.ndarray:
    return sum(embed([a, b], [i, j], n, d) for a, b in operator_schmidt(op2, d))


def operator_schmidt(op2: np.ndarray, d: int, cutoff: float = 1e-14):
    """Decompose a two-site operator as sum_k A_k (x) B_k."""
    t = op2.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)
    u, s, vh = np.linalg.svd(t)
    if s[0] == 0:
        return [(np.zeros((d, d), dtype=complex), np.zeros((d, d), dtype=complex))]
    keep = s > cutoff * s[0]
    return [
        (u[:, k].reshape(d, d) * s[k], vh[k].reshape(d, d))
        for k in np.flatnonzero(keep)
    ]


# ---------------------------------------------------------------------------
# vectorization and superoperators


def vectorize(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1)


def unvectorize(v: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(v.size)))
    return np.asarray(v).reshape(d, d)


def left_superop(a: np.ndarray) -> np.ndarray:
    """vec(a rho) = left_superop(a) vec(rho)."""
    return np.kron(a, np.eye(a.shape[0]))


def right_superop(b: np.ndarray) -> np.ndarray:
    """vec(rho b) = right_superop(b) vec(rho)."""
    return np.kron(np.eye(b.shape[0]), b.T)


def commutator_superop(h: np.ndarray) -> np.ndarray:
    """-i (h (x) I - I (x) h^T)."""
    return -1j * (left_superop(h) - right_superop(h))


def dissipator_superop(op: np.ndarray, rate: float) -> np.ndarray:
    """rate [ L (x) (L^dag)^T - (L^dag L (x) I + I (x) (L^dag L)^T) / 2 ]."""
    ldl = op.conj().T @ op
    return rate * (np.kron(op, op.conj()) - 0.5 * (left_superop(ldl) + right_superop(ldl)))


def pair_commutator_superop(h2: np.ndarray, d: int = 3) -> np.ndarray:
    """Superoperator of -i[h2, .] on two sites in site-grouped vectorization.

    The result acts on (j_a, j_b) with j = (i, i') per site, which is the
    ordering an MPDO uses, not the ordering of ``vectorize`` on the
    two-site matrix.
    """
    out = np.zeros((d**4, d**4), dtype=complex)
    for a, b in operator_schmidt(h2, d):
        out += -1j * (np.kron(left_superop(a), left_superop(b)) - np.kron(right_superop(a), right_superop(b)))
    return out


@dataclass(frozen=True, eq=False)
class SuperOpTerm:
    """A local generator term acting on ``sites`` (one or two, ascending).

    ``matrix`` has dimension ``local_dim ** len(sites)``.
    """

    sites: tuple[int, ...]
    matrix: np.ndarray
    label: str = ""

    @property
    def local_dim(self) -> int:
        return int(round(self.matrix.shape[0] ** (1.0 / len(self.sites))))

    @cached_property
    def factors(self) -> list[tuple[np.ndarray, ...]]:
        """Product decomposition: the term equals sum over k of kron(*factors[k])."""
        if len(self.sites) == 1:
            return [(self.matrix,)]
        if len(self.sites) == 2:
            return operator_schmidt(self.matrix, self.local_dim)
        raise NotImplementedError("terms on more than two sites")


def build_superop_terms(model: ModelSpec) -> list[SuperOpTerm]:
    """Local terms of the vectorized Lindblad generator."""
    terms = []
    for s, params in enumerate(model.sites):
        h = single_site_hamiltonian(params, model.constants)
        terms.append(SuperOpTerm((s,), commutator_superop(h), "hamiltonian"))
    if model.interactions:
        n = model.n_sites
        for i in range(n):
            for j in range(i + 1, n):
                h2 = pair_hamiltonian(model, i, j)
                terms.append(SuperOpTerm((i, j), pair_commutator_superop(h2), "dipolar"))
    for diss in model.dissipators:
        if diss.rate > 0:
            terms.append(
                SuperOpTerm((diss.site,), dissipator_superop(diss.matrix(), diss.rate), "dissipator")
            )
    return terms


def hamiltonian_terms(model: ModelSpec) -> list[SuperOpTerm]:
    """Hamiltonian as local terms on the 3-dimensional site space."""
    terms = [
        SuperOpTerm((s,), single_site_hamiltonian(p, model.constants), "hamiltonian")
        for s, p in enumerate(model.sites)
    ]
    if model.interactions:
        n = model.n_sites
        for i in range(n):
            for j in range(i + 1, n):
                terms.append(SuperOpTerm((i, j), pair_hamiltonian(model, i, j), "dipolar"))
    return terms


def dense_from_terms(terms, n: int, d: int) -> np.ndarray:
    """Dense sum of local terms; only sensible for small ``n``."""
    out = np.zeros((d**n, d**n), dtype=complex)
    for t in terms:
        for fac in t.factors:
            out += embed(fac, t.sites, n, d)
    return out


def grouped_permutation(n: int, d: int = 3) -> np.ndarray:
    """Index map from the row-major vec of an N-site matrix to site-grouped order.

    ``vectorize(rho)[perm]`` is ordered as (i_1, i'_1, ..., i_N, i'_N).
    """
    idx = np.arange(d ** (2 * n)).reshape((d,) * (2 * n))
    order = [k for s in range(n) for k in (s, n + s)]
    return idx.transpose(order).reshape(-1)


def dense_liouvillian(model: ModelSpec) -> np.ndarray:
    """Dense Lindblad generator from the full N-site matrices, in site-grouped order.

    Built from the N-site Hamiltonian and jump operators directly, without the
    local term list, so it can serve as a check on :func:`build_superop_terms`.
    """
    n = model.n_sites
    h = dense_hamiltonian(model)
    lv = commutator_superop(h)
    for diss in model.dissipators:
        if diss.rate > 0:
            op = embed([diss.matrix()], [diss.site], n, 3)
            lv = lv + dissipator_superop(op, diss.rate)
    perm = grouped_permutation(n)
    return lv[np.ix_(perm, perm)]
