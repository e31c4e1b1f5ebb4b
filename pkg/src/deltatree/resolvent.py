"""Assembly and solution of the resolvent linear systems.

On each edge the resolvent of the tree Hamiltonian applied to Gaussian
data u0 has the form

    R u0(x) = c e^{omega x} + ct e^{-omega x} + t_e(x, omega) / omega,

with c = 0 on external (infinite) edges and

    t_e(x, omega) = 1/2 * int_{I_e} u0|_e(y) exp(-omega |x - y|) dy.

The unknown coefficients satisfy one linear system per tree: for every
vertex, continuity of the values across all incident edges and one flux
condition

    sum over incident edges of the derivative pointing into the edge
    (away from the vertex)  =  alpha(v) * u(v).

Columns and rows are ordered by the construction sequence of the tree:
the root star contributes one ct column per root edge, every grafting
step appends the c column of the edge it cuts followed by the ct
columns of its fresh rays.  Rows come in vertex groups, continuity rows
first, flux row last.  With this ordering the direct determinant
coincides exactly (including sign) with the product recursion in
``determinants``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .wavepackets import packet_exp_integral


class SingularSystemError(Exception):
    """Raised when the resolvent system is numerically singular."""

    def __init__(self, omega, condition):
        self.omega = omega
        self.condition = condition
        super().__init__(
            f"resolvent system is singular at omega={omega}: "
            f"reciprocal condition number {condition:.3e}")


def t_edge(packets, length, x, omega):
    """Source term t_e(x, omega) for the given edge data (closed form).

    ``x`` or ``omega`` may be arrays (broadcast against each other).
    Entire in omega; valid for complex omega.
    """
    x = np.asarray(x, dtype=float)
    omega = np.asarray(omega, dtype=complex)
    total = np.zeros(np.broadcast_shapes(x.shape, omega.shape), dtype=complex)
    for pkt in packets:
        left = packet_exp_integral(pkt, omega, 0.0, x, log_pref=-omega * x)
        right = packet_exp_integral(pkt, -omega, x, length, log_pref=omega * x)
        total = total + left + right
    return 0.5 * total


def t_integral(edge, u0, omega, x):
    """Source term t_e(x, omega) for one edge of a graph function
    (convenience wrapper around ``t_edge``)."""
    return t_edge(u0.edge_packets(edge.id), edge.length, x, omega)


def system_ordering(tree):
    """Canonical column order and vertex groups from the construction
    sequence.  Returns (cols, groups) where cols is a list of
    (edge_id, 'c' | 'ct') and groups a list of (vertex_id, local_edges)."""
    root_edges, steps = tree.construction_sequence()
    cols = [(eid, "ct") for eid in root_edges]
    groups = [(tree.root, list(root_edges))]
    for s in steps:
        cols.append((s.cut_edge, "c"))
        cols.extend((eid, "ct") for eid in s.new_edges)
        groups.append((s.vertex, [s.cut_edge] + list(s.new_edges)))
    return cols, groups


@dataclass
class ResolventSystem:
    """Assembled linear system D x = T (with omega*T = S @ tvals)."""
    tree: object
    omega: complex
    matrix: np.ndarray          # D, shape (N, N)
    source: np.ndarray          # T, shape (N,)
    slot_matrix: np.ndarray     # S, shape (N, M)
    tvals: np.ndarray           # t_e values at the slots, shape (M,)
    col_index: dict             # (edge_id, 'c'|'ct') -> column
    slot_index: dict            # (edge_id, x_endpoint) -> slot
    row_labels: list            # ('cont', v, i) or ('flux', v)
    normalized: bool

    def flux_row(self, vertex_id):
        return self.row_labels.index(("flux", vertex_id))


def _endpoint(tree, edge_id, vertex_id):
    e = tree.edge_map[edge_id]
    return e.length if e.head == vertex_id else 0.0


def _value_coeffs(tree, edge_id, x, omega):
    """Unknown-coefficient pairs for the value of R u0 at coordinate x."""
    e = tree.edge_map[edge_id]
    out = []
    if not e.is_external:
        out.append(((edge_id, "c"), np.exp(omega * x)))
    out.append(((edge_id, "ct"), np.exp(-omega * x)))
    return out


def _outgoing_deriv_coeffs(tree, edge_id, x, omega):
    """Coefficients of the derivative pointing into the edge, away from
    the vertex sitting at coordinate x (x is 0 or the edge length)."""
    e = tree.edge_map[edge_id]
    sgn = 1.0 if x == 0.0 else -1.0
    out = []
    if not e.is_external:
        out.append(((edge_id, "c"), sgn * omega * np.exp(omega * x)))
    out.append(((edge_id, "ct"), -sgn * omega * np.exp(-omega * x)))
    return out


def assemble_system(tree, omega, u0=None, normalized=True):
    """Assemble the resolvent system at the given (complex) omega.

    With ``normalized`` the flux rows are scaled by -1/(omega + alpha(v))
    (requires omega != -alpha(v)); the raw form is entire in omega.
    """
    omega = complex(omega)
    if omega == 0:
        raise ValueError("omega = 0 is excluded; use contour evaluation")
    cols, groups = system_ordering(tree)
    col_index = {key: j for j, key in enumerate(cols)}
    n = len(cols)

    slots = []
    for e in tree.edges:
        slots.append((e.id, 0.0))
        if not e.is_external:
            slots.append((e.id, e.length))
    slot_index = {key: m for m, key in enumerate(slots)}

    D = np.zeros((n, n), dtype=complex)
    S = np.zeros((n, len(slots)), dtype=complex)
    row_labels = []
    r = 0
    for vid, locals_ in groups:
        alpha = tree.alpha(vid)
        if normalized and abs(omega + alpha) < 1e-14:
            raise ValueError(
                f"omega = -alpha({vid}) is a pole of the normalized rows")
        xs = [_endpoint(tree, eid, vid) for eid in locals_]
        # continuity rows between consecutive local edges
        for i in range(len(locals_) - 1):
            for key, val in _value_coeffs(tree, locals_[i], xs[i], omega):
                D[r, col_index[key]] += val
            for key, val in _value_coeffs(tree, locals_[i + 1], xs[i + 1],
                                          omega):
                D[r, col_index[key]] -= val
            S[r, slot_index[(locals_[i + 1], xs[i + 1])]] += 1.0
            S[r, slot_index[(locals_[i], xs[i])]] -= 1.0
            row_labels.append(("cont", vid, i))
            r += 1
        # flux row (raw form): sum of outgoing derivatives - alpha * value
        scale = -1.0 / (omega + alpha) if normalized else 1.0
        for eid, x in zip(locals_, xs):
            for key, val in _outgoing_deriv_coeffs(tree, eid, x, omega):
                D[r, col_index[key]] += scale * val
            S[r, slot_index[(eid, x)]] -= scale * omega
        for key, val in _value_coeffs(tree, locals_[0], xs[0], omega):
            D[r, col_index[key]] -= scale * alpha * val
        S[r, slot_index[(locals_[0], xs[0])]] += scale * alpha
        row_labels.append(("flux", vid))
        r += 1

    tvals = np.zeros(len(slots), dtype=complex)
    if u0 is not None:
        for (eid, x), m in slot_index.items():
            pk = u0.edge_packets(eid)
            if pk:
                tvals[m] = t_edge(pk, tree.edge_map[eid].length, x, omega)
    source = (S @ tvals) / omega
    return ResolventSystem(tree, omega, D, source, S, tvals, col_index,
                           slot_index, row_labels, normalized)


@dataclass
class ResolventSolution:
    tree: object
    u0: object
    omega: complex
    coeffs: dict            # edge_id -> (c, ct); c = 0 on external edges
    rcond: float


def solve_resolvent(tree, omega, u0, rcond_min=1e-12):
    """Solve for the resolvent coefficients of R_omega u0."""
    sys = assemble_system(tree, omega, u0, normalized=True)
    sv = np.linalg.svd(sys.matrix, compute_uv=False)
    rcond = float(sv[-1] / sv[0])
    if not np.isfinite(rcond) or rcond < rcond_min:
        raise SingularSystemError(omega, rcond)
    x = np.linalg.solve(sys.matrix, sys.source)
    coeffs = {}
    for e in tree.edges:
        c = 0.0 + 0.0j
        if not e.is_external:
            c = x[sys.col_index[(e.id, "c")]]
        ct = x[sys.col_index[(e.id, "ct")]]
        coeffs[e.id] = (c, ct)
    return ResolventSolution(tree, u0, complex(omega), coeffs, rcond)


def evaluate_resolvent(sol, edge_id, x):
    """Evaluate R_omega u0 on an edge at coordinates x (array ok)."""
    x = np.asarray(x, dtype=float)
    c, ct = sol.coeffs[edge_id]
    om = sol.omega
    out = c * np.exp(om * x) + ct * np.exp(-om * x)
    pk = sol.u0.edge_packets(edge_id)
    if pk:
        length = sol.tree.edge_map[edge_id].length
        out = out + t_edge(pk, length, x, om) / om
    return out


def resolvent_defect(sol, edge_id, x, h=1e-4):
    """Pointwise defect (-d^2/dx^2 + omega^2) R u0 - u0 on an edge,
    with the second derivative from a 5-point stencil.  Should be small
    (O(h^4)) at interior points away from edge endpoints."""
    x = np.asarray(x, dtype=float)
    u = lambda y: evaluate_resolvent(sol, edge_id, y)
    d2 = (-u(x + 2 * h) + 16 * u(x + h) - 30 * u(x)
          + 16 * u(x - h) - u(x - 2 * h)) / (12 * h * h)
    return -d2 + sol.omega ** 2 * u(x) - sol.u0(edge_id, x)


residual_check = resolvent_defect


def vertex_value(sol, vertex_id, edge_id=None):
    """Value of R u0 at a vertex, computed along one incident edge."""
    inc = sol.tree.incident(vertex_id)
    if edge_id is None:
        edge_id, x = inc[0]
    else:
        x = dict(inc)[edge_id]
    return complex(evaluate_resolvent(sol, edge_id, np.asarray(x))[()])


def vertex_flux_defect(sol, vertex_id, h=None):
    """sum of outgoing derivatives minus alpha * value at a vertex, with
    one-sided 4th order finite differences; should vanish."""
    tree = sol.tree
    total = 0.0 + 0.0j
    for eid, x in tree.incident(vertex_id):
        e = tree.edge_map[eid]
        span = e.length if not e.is_external else 1.0
        hh = h if h is not None else min(1.0, span) * 1e-3
        sgn = 1.0 if x == 0.0 else -1.0
        pts = x + sgn * hh * np.arange(5)
        vals = evaluate_resolvent(sol, eid, pts)
        # the stencil runs into the edge, so it directly yields the
        # derivative pointing away from the vertex
        deriv = (-25 * vals[0] + 48 * vals[1] - 36 * vals[2]
                 + 16 * vals[3] - 3 * vals[4]) / (12 * hh)
        total += deriv
    return total - tree.alpha(vertex_id) * vertex_value(sol, vertex_id)
