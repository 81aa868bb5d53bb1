"""Assembly of the ground-state spin Hamiltonian from a declarative system.

The Hamiltonian, in MHz, for an electron spin S coupled to a set of nuclei:

    H = D (Sz^2 - S^2/3) + beta_e B.g.S
        + sum_k [ S.A_k.I_k + P_k (I_kz^2 - I_k^2/3) - gamma_k B.I_k ]

The frame is fixed to the defect: z is the C3 symmetry axis.  The nuclear
Zeeman term is included by default (it can be switched off per nucleus) so
that cross-term ("pseudo") nuclear splittings can be compared against the
bare ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import constants, spinops

_SYM_TOL_MHZ = 1e-9


def field_vector(magnitude_gauss: float, theta_deg: float, phi_deg: float = 0.0) -> np.ndarray:
    """Cartesian field vector in Gauss; theta is the polar angle from the z axis."""
    if magnitude_gauss < 0:
        raise ValueError(f"field magnitude must be >= 0, got {magnitude_gauss}")
    th = np.deg2rad(theta_deg)
    ph = np.deg2rad(phi_deg)
    return magnitude_gauss * np.array(
        [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)]
    )


def axial_tensor(
    parallel: float,
    perpendicular: float,
    axis_polar_deg: float = 0.0,
    axis_azimuth_deg: float = 0.0,
) -> np.ndarray:
    """Symmetric 3x3 tensor with one unique principal axis.

    `parallel` is the principal value along the unique axis (given by its
    polar/azimuth angles in the defect frame), `perpendicular` the doubly
    degenerate one.
    """
    n = field_vector(1.0, axis_polar_deg, axis_azimuth_deg)
    return perpendicular * np.eye(3) + (parallel - perpendicular) * np.outer(n, n)


def isotropic_tensor(value: float) -> np.ndarray:
    return value * np.eye(3)


@dataclass
class Nucleus:
    """One nuclear spin coupled to the electron.

    hyperfine_mhz is the full 3x3 coupling tensor A (symmetric);
    quadrupole_p_mhz is the axial quadrupole coupling P along z, only
    meaningful for I >= 1; gamma_mhz_per_gauss the nuclear Zeeman
    coefficient, applied as -gamma B.I when `zeeman` is True.
    """

    name: str
    two_i: int
    hyperfine_mhz: np.ndarray
    quadrupole_p_mhz: float = 0.0
    gamma_mhz_per_gauss: float = 0.0
    zeeman: bool = True

    def __post_init__(self):
        spinops.dimension(self.two_i)
        a = np.asarray(self.hyperfine_mhz, dtype=float)
        if a.shape == ():
            a = isotropic_tensor(float(a))
        if a.shape != (3, 3):
            raise ValueError(f"hyperfine tensor must be 3x3, got shape {a.shape}")
        if np.max(np.abs(a - a.T)) > _SYM_TOL_MHZ:
            raise ValueError(f"hyperfine tensor for {self.name!r} is not symmetric")
        self.hyperfine_mhz = a
        if self.two_i < 2 and self.quadrupole_p_mhz != 0.0:
            raise ValueError(
                f"quadrupole coupling requires I >= 1, but {self.name!r} has "
                f"2I = {self.two_i}"
            )

    @property
    def dim(self) -> int:
        return self.two_i + 1


@dataclass
class SpinSystem:
    """Declarative description of the electron spin, its nuclei and the field."""

    d_zfs_mhz: float = constants.D_GS_MHZ
    g_tensor: np.ndarray = None
    field_gauss: np.ndarray = None
    nuclei: list = field(default_factory=list)
    two_s: int = 2

    def __post_init__(self):
        if self.g_tensor is None:
            self.g_tensor = isotropic_tensor(constants.G_ELECTRON)
        g = np.asarray(self.g_tensor, dtype=float)
        if g.shape == ():
            g = isotropic_tensor(float(g))
        if g.shape != (3, 3):
            raise ValueError(f"g tensor must be 3x3, got shape {g.shape}")
        self.g_tensor = g
        if self.field_gauss is None:
            self.field_gauss = np.zeros(3)
        b = np.asarray(self.field_gauss, dtype=float)
        if b.shape != (3,):
            raise ValueError(f"field must be a 3-vector, got shape {b.shape}")
        self.field_gauss = b

    @property
    def dims(self) -> tuple:
        return (self.two_s + 1, *[n.dim for n in self.nuclei])

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def with_field(self, magnitude_gauss, theta_deg, phi_deg=0.0) -> "SpinSystem":
        return replace(self, field_gauss=field_vector(magnitude_gauss, theta_deg, phi_deg))

    def without_hyperfine(self) -> "SpinSystem":
        """Copy with every hyperfine tensor zeroed (nuclear Zeeman kept)."""
        bare = [replace(n, hyperfine_mhz=np.zeros((3, 3))) for n in self.nuclei]
        return replace(self, nuclei=bare)


def carbon13(
    a_parallel_mhz: float = constants.A_C13_PARALLEL_MHZ,
    a_perpendicular_mhz: float = constants.A_C13_PERPENDICULAR_MHZ,
    axis_polar_deg: float = constants.A_C13_AXIS_POLAR_DEG,
    axis_azimuth_deg: float = 0.0,
    zeeman: bool = True,
) -> Nucleus:
    """A 13C nucleus (I = 1/2) with an axially symmetric hyperfine tensor."""
    return Nucleus(
        name="13C",
        two_i=1,
        hyperfine_mhz=axial_tensor(
            a_parallel_mhz, a_perpendicular_mhz, axis_polar_deg, axis_azimuth_deg
        ),
        gamma_mhz_per_gauss=constants.GAMMA_C13_MHZ_PER_GAUSS,
        zeeman=zeeman,
    )


def nitrogen14(
    a_iso_mhz: float = constants.A_N14_MHZ,
    quadrupole_p_mhz: float = constants.P_N14_MHZ,
    zeeman: bool = True,
) -> Nucleus:
    """The on-site 14N nucleus (I = 1) with isotropic hyperfine and axial P."""
    return Nucleus(
        name="14N",
        two_i=2,
        hyperfine_mhz=isotropic_tensor(a_iso_mhz),
        quadrupole_p_mhz=quadrupole_p_mhz,
        gamma_mhz_per_gauss=constants.GAMMA_N14_MHZ_PER_GAUSS,
        zeeman=zeeman,
    )


def nv_system(
    b_gauss: float = 0.0,
    theta_deg: float = 0.0,
    phi_deg: float = 0.0,
    with_carbon13: bool = True,
    with_nitrogen14: bool = False,
    d_zfs_mhz: float = constants.D_GS_MHZ,
    **nucleus_kwargs,
) -> SpinSystem:
    """Convenience factory: defect electron spin plus the default nuclei."""
    nuclei = []
    if with_carbon13:
        nuclei.append(carbon13(**nucleus_kwargs))
    if with_nitrogen14:
        nuclei.append(nitrogen14())
    return SpinSystem(
        d_zfs_mhz=d_zfs_mhz,
        field_gauss=field_vector(b_gauss, theta_deg, phi_deg),
        nuclei=nuclei,
    )


def build_hamiltonian(system: SpinSystem) -> np.ndarray:
    """Dense Hermitian matrix of the full spin Hamiltonian, MHz."""
    dims = system.dims
    sx, sy, sz, s2 = spinops.spin_matrices(system.two_s)
    s_ops = [spinops.embed(op, 0, dims) for op in (sx, sy, sz)]
    s2_full = spinops.embed(s2, 0, dims)

    h = system.d_zfs_mhz * (s_ops[2] @ s_ops[2] - s2_full / 3.0)

    b_eff = constants.BOHR_MAGNETON_MHZ_PER_GAUSS * (system.field_gauss @ system.g_tensor)
    for a in range(3):
        h = h + b_eff[a] * s_ops[a]

    for k, nuc in enumerate(system.nuclei):
        slot = k + 1
        ix, iy, iz, i2 = spinops.spin_matrices(nuc.two_i)
        i_ops = [spinops.embed(op, slot, dims) for op in (ix, iy, iz)]
        for a in range(3):
            for b in range(3):
                coeff = nuc.hyperfine_mhz[a, b]
                if coeff != 0.0:
                    h = h + coeff * (s_ops[a] @ i_ops[b])
        if nuc.quadrupole_p_mhz != 0.0:
            i2_full = spinops.embed(i2, slot, dims)
            h = h + nuc.quadrupole_p_mhz * (i_ops[2] @ i_ops[2] - i2_full / 3.0)
        if nuc.zeeman and nuc.gamma_mhz_per_gauss != 0.0:
            for a in range(3):
                h = h - nuc.gamma_mhz_per_gauss * system.field_gauss[a] * i_ops[a]

    return (h + h.conj().T) / 2.0
