"""Truncated bosonic Fock space over a finite momentum grid.

The basis is graded by total boson number and ordered ascending-lex
inside each sector, so the states with total <= n form a contiguous
prefix of the index range.  All operators are built from per-mode ladder
triples (src, dst, amp) with dst carrying one extra boson in the mode
and amp = sqrt(n_mode + 1).

Conventions: a one-boson function f is stored as its values on the grid
modes, the pairing is s(f, g) = sum_i w_i f_i g_i with w_i the cell
weights, and the smeared creation operator uses the l2 coefficients
F_i = sqrt(w_i) f_i, so that phi(f) = a(F) + a*(F) gives
<vac, phi(f)^2 vac> = s(f, f).
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse


@dataclass(frozen=True, eq=False)
class ModeGrid:
    """Finite set of momentum modes with quadrature weights."""

    d: int
    modes: np.ndarray    # (M, d)
    weights: np.ndarray  # (M,)
    h: float
    k_max: float | None = None

    @property
    def n_modes(self):
        return self.modes.shape[0]

    def norms(self):
        return np.sqrt(np.sum(self.modes**2, axis=1))

    def negation_index(self):
        """Permutation idx with modes[idx] == -modes, or None."""
        lookup = {}
        for j, row in enumerate(np.round(self.modes, 12)):
            lookup[row.tobytes()] = j
        idx = np.empty(self.n_modes, dtype=np.int64)
        for j, row in enumerate(np.round(-self.modes, 12)):
            key = row.tobytes()
            if key not in lookup:
                return None
            idx[j] = lookup[key]
        return idx


def build_mode_grid(d, k_max, m):
    """Uniform cell-centered grid on [-k_max, k_max]^d with m cells per
    axis.  m must be even so the origin sits on a cell corner and is
    never a mode."""
    if m < 2 or m % 2 != 0:
        raise ValueError(f"m must be even and >= 2, got {m}")
    if k_max <= 0:
        raise ValueError(f"k_max must be positive, got {k_max}")
    h = 2.0 * k_max / m
    axis = h * (np.arange(m) - (m - 1) / 2.0)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    modes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.full(modes.shape[0], h**d)
    return ModeGrid(d=d, modes=modes, weights=weights, h=h, k_max=float(k_max))


def _compositions(m, n):
    """Weak compositions of n into m parts, ascending lex."""
    if m == 1:
        yield (n,)
        return
    for head in range(n + 1):
        for tail in _compositions(m - 1, n - head):
            yield (head,) + tail


@dataclass(eq=False)
class FockBasis:
    grid: ModeGrid
    n_max: int
    occupations: np.ndarray    # (S, M) int16
    totals: np.ndarray         # (S,) int16
    sector_offsets: np.ndarray  # (n_max + 2,)
    _index: dict = field(repr=False, default_factory=dict)
    _ladder: dict = field(repr=False, default_factory=dict)

    @property
    def size(self):
        return self.occupations.shape[0]

    def index_of(self, occ):
        return self._index[np.asarray(occ, dtype=np.int16).tobytes()]

    def sector_slice(self, n):
        return slice(int(self.sector_offsets[n]),
                     int(self.sector_offsets[n + 1]))

    def cumulative_size(self, n):
        """Number of states with total boson number <= n."""
        n = min(n, self.n_max)
        if n < 0:
            return 0
        return int(self.sector_offsets[n + 1])

    def ladder(self, i):
        """(src, dst, amp) with occupations[dst] = occupations[src] + e_i
        and amp = sqrt(occupations[src][i] + 1)."""
        if i not in self._ladder:
            src_l, dst_l, amp_l = [], [], []
            below = self.cumulative_size(self.n_max - 1)
            occs = self.occupations
            for s in range(below):
                occ = occs[s].copy()
                occ[i] += 1
                dst_l.append(self._index[occ.tobytes()])
                src_l.append(s)
                amp_l.append(math.sqrt(occs[s, i] + 1.0))
            self._ladder[i] = (np.array(src_l, dtype=np.int64),
                               np.array(dst_l, dtype=np.int64),
                               np.array(amp_l))
        return self._ladder[i]


def enumerate_basis(grid, n_max, hard_limit=200_000):
    m = grid.n_modes
    total = math.comb(m + n_max, m)
    if total > hard_limit:
        raise ValueError(
            f"basis size {total} exceeds hard limit {hard_limit} "
            f"(M={m}, n_max={n_max})")
    rows = []
    offsets = [0]
    for n in range(n_max + 1):
        rows.extend(_compositions(m, n))
        offsets.append(len(rows))
    occupations = np.array(rows, dtype=np.int16)
    totals = occupations.sum(axis=1).astype(np.int16)
    index = {occupations[s].tobytes(): s for s in range(len(rows))}
    return FockBasis(grid=grid, n_max=n_max, occupations=occupations,
                     totals=totals,
                     sector_offsets=np.array(offsets, dtype=np.int64),
                     _index=index)


# ----------------------------------------------------------- operators


def annihilation(basis, i):
    """Discrete-mode annihilator a_i and creator a_i^T as csr matrices."""
    src, dst, amp = basis.ladder(i)
    S = basis.size
    a = scipy.sparse.csr_matrix((amp, (src, dst)), shape=(S, S))
    return a, a.T.tocsr()


def second_quantize(basis, values):
    """dGamma of a multiplication operator: diagonal with entries
    sum_i occ_i * values_i (discrete-mode convention, no weights)."""
    diag = basis.occupations @ np.asarray(values, dtype=float)
    return scipy.sparse.diags(diag, format="csr")


def dgamma_diag(basis, values):
    return basis.occupations @ np.asarray(values, dtype=float)


def field_momentum(basis):
    """Per-state total field momentum, shape (S, d)."""
    return basis.occupations @ basis.grid.modes


def field_operator(basis, fvals):
    """phi(f) = a(F) + a*(F) with F_i = sqrt(w_i) f_i, as csr."""
    coef = np.sqrt(basis.grid.weights) * np.asarray(fvals, dtype=float)
    S = basis.size
    rows, cols, data = [], [], []
    for i in np.nonzero(coef)[0]:
        src, dst, amp = basis.ladder(int(i))
        rows.append(src)
        cols.append(dst)
        data.append(coef[i] * amp)
    if not rows:
        return scipy.sparse.csr_matrix((S, S))
    upper = scipy.sparse.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(S, S))
    return (upper + upper.T).tocsr()


def _apply_creation(basis, coef, x):
    out = np.zeros_like(x)
    for i in np.nonzero(coef)[0]:
        src, dst, amp = basis.ladder(int(i))
        np.add.at(out, dst, coef[i] * amp * x[src])
    return out


def _apply_annihilation(basis, coef, x):
    out = np.zeros_like(x)
    for i in np.nonzero(coef)[0]:
        src, dst, amp = basis.ladder(int(i))
        np.add.at(out, src, coef[i] * amp * x[dst])
    return out


def weyl_operator(basis, fvals, dense_limit=6000, max_leakage=None):
    """Dense orthogonal matrix expm(a*(F) - a(F)).

    The matrix exponential of the truncated generator is exactly
    orthogonal, so truncation error shows up in matrix elements near the
    cutoff rather than as a unitarity defect.  If max_leakage is given,
    the exact cutoff leakage of the displaced vacuum is checked against
    it."""
    if basis.size > dense_limit:
        raise ValueError(
            f"basis size {basis.size} exceeds dense limit {dense_limit}")
    coef = np.sqrt(basis.grid.weights) * np.asarray(fvals, dtype=float)
    if max_leakage is not None:
        vac = np.zeros(basis.size)
        vac[0] = 1.0
        _, leak = displace_truncated(basis, fvals, vac)
        if leak > max_leakage:
            raise ValueError(
                f"Weyl cutoff leakage {leak:.3e} exceeds {max_leakage:.3e}")
    S = basis.size
    gen = np.zeros((S, S))
    for i in np.nonzero(coef)[0]:
        src, dst, amp = basis.ladder(int(i))
        np.add.at(gen, (dst, src), coef[i] * amp)
    gen -= gen.T
    return scipy.linalg.expm(gen)


def exponential_vector(basis, gvals):
    """sum_n a*(G)^n / n! applied to the vacuum, G_i = sqrt(w_i) g_i."""
    coef = np.sqrt(basis.grid.weights) * np.asarray(gvals, dtype=float)
    term = np.zeros(basis.size)
    term[0] = 1.0
    acc = term.copy()
    for n in range(1, basis.n_max + 1):
        term = _apply_creation(basis, coef, term) / n
        acc += term
    return acc


def annihilator_slice(basis, psi, i):
    """Pointwise annihilator a(k_i) psi = a_i psi / sqrt(w_i)."""
    src, dst, amp = basis.ladder(i)
    out = np.zeros_like(psi)
    np.add.at(out, src, amp * psi[dst])
    out /= math.sqrt(basis.grid.weights[i])
    return out


def displace_truncated(basis, fvals, psi):
    """Exact projection of the full-space Weyl displacement.

    Normal-ordered form W(f) = e^{-|F|^2/2} e^{a*(F)} e^{-a(F)}: the
    annihilation series terminates on the truncated space and the
    creation series only moves weight upward, so chaining truncated
    applications reproduces the projection of the untruncated operator
    exactly.  Returns (phi, leak) with leak = |(1 - P) W psi| computed
    from unitarity."""
    coef = np.sqrt(basis.grid.weights) * np.asarray(fvals, dtype=float)
    term = psi.astype(float, copy=True)
    chi = term.copy()
    for n in range(1, basis.n_max + 1):
        term = -_apply_annihilation(basis, coef, term) / n
        chi += term
    term = chi.copy()
    phi = chi.copy()
    for n in range(1, basis.n_max + 1):
        term = _apply_creation(basis, coef, term) / n
        phi += term
    phi *= math.exp(-0.5 * float(coef @ coef))
    leak_sq = float(psi @ psi) - float(phi @ phi)
    return phi, math.sqrt(max(0.0, leak_sq))


def cutoff_leakage(basis, fvals, x):
    """Exact norm of the sector-(n_max + 1) part of a*(F) x, obtained by
    accumulating amplitudes on virtual overflow occupations."""
    coef = np.sqrt(basis.grid.weights) * np.asarray(fvals, dtype=float)
    top = basis.sector_slice(basis.n_max)
    acc = {}
    occs = basis.occupations
    for s in range(top.start, top.stop):
        if x[s] == 0.0:
            continue
        for i in np.nonzero(coef)[0]:
            occ = occs[s].copy()
            occ[i] += 1
            key = occ.tobytes()
            acc[key] = acc.get(key, 0.0) + (
                coef[i] * math.sqrt(occs[s, i] + 1.0) * x[s])
    return math.sqrt(sum(v * v for v in acc.values()))


def project_total(basis, x, n):
    """Zero out every component with total boson number > n."""
    y = np.asarray(x, dtype=float).copy()
    y[basis.cumulative_size(n):] = 0.0
    return y
