"""Determinant lines of dense linear operators, stabilization, and transport.

The determinant line of T is (max wedge of ker T) ⊗ (max wedge of coker T)*.
An isomorphism carries the natural orientation +1.  For a projection P with
P T surjective onto range(P), the four-term exact sequence

    0 -> ker T -> ker PT --T--> (I-P)F -> coker T -> 0

induces an isomorphism det(T) -> det(PT); its sign relative to orthonormal
bases is what `stabilize` computes.  Along an operator path a common
projection makes all PT_t surjective, the kernels form a bundle, and
discrete frame transport carries orientations end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import fd_jacobian, orthonormal_columns, svd_split
from .errors import (
    GridTooCoarse,
    NotSurjectiveAfterProjection,
    Singular,
)

SV_CUTOFF_REL = 1e-8
FRAME_JUMP_BOUND = 0.5


@dataclass(frozen=True)
class DeterminantLine:
    """Ordered orthonormal kernel/cokernel bases of T with a sign."""

    operator: np.ndarray
    kernel_basis: np.ndarray
    cokernel_basis: np.ndarray
    sign: int = 1
    sv_cutoff: float = SV_CUTOFF_REL

    @property
    def kernel_dim(self) -> int:
        return self.kernel_basis.shape[1]

    @property
    def cokernel_dim(self) -> int:
        return self.cokernel_basis.shape[1]


def determinant_line(T, sign: int = 1, cutoff_rel: float = SV_CUTOFF_REL) -> DeterminantLine:
    """SVD kernel and cokernel bases of T packaged with an orientation sign."""
    T = np.atleast_2d(np.asarray(T, dtype=float))
    _, kernel, coker, _ = svd_split(T, cutoff_rel)
    return DeterminantLine(operator=T, kernel_basis=kernel, cokernel_basis=coker,
                           sign=int(np.sign(sign)), sv_cutoff=cutoff_rel)


def natural_orientation(T) -> DeterminantLine:
    """The +1 orientation of an isomorphism via e ⊗ e* -> e*(e).

    Raises Singular when T has a numerical kernel; every isomorphism, of
    either determinant sign, carries the natural orientation +1.
    """
    T = np.atleast_2d(np.asarray(T, dtype=float))
    if T.shape[0] != T.shape[1]:
        raise Singular(f"natural orientation needs a square operator, got {T.shape}")
    dl = determinant_line(T, sign=1)
    if dl.kernel_dim or dl.cokernel_dim:
        raise Singular("operator is not an isomorphism at the singular-value cutoff")
    return dl


def _sign_det(M) -> int:
    M = np.atleast_2d(M)
    if M.shape[0] == 0:
        return 1
    d = np.linalg.det(M)
    if d == 0:
        raise Singular("degenerate basis-change determinant")
    return 1 if d > 0 else -1


@dataclass(frozen=True)
class StabilizationResult:
    sign: int
    kernel_basis: np.ndarray          # orthonormal basis of ker(PT)
    complement_basis: np.ndarray      # orthonormal basis of (I-P)F


def stabilize(dl: DeterminantLine, P) -> StabilizationResult:
    """Sign of the exact-sequence isomorphism det(T) -> det(PT).

    The input bases are dl's kernel/cokernel pair; the stabilized line uses
    SVD bases of ker(PT) and of (I-P)F.  Raises
    NotSurjectiveAfterProjection if PT misses part of range(P).

    Convention, pinned by the worked T = diag(1,0), P = diag(1,0) example
    (which yields +1): lifting the cokernel through (I-P)F and completing
    the kernel of T inside ker(PT), the sign is the product of the two
    basis-change determinants.
    """
    T = dl.operator
    P = np.atleast_2d(np.asarray(P, dtype=float))
    F_dim = T.shape[0]
    PT = P @ T
    rank_P = int(np.round(np.trace(P)))
    rank_PT, ker_PT, _, sv = svd_split(PT, dl.sv_cutoff)
    if rank_PT != rank_P:
        raise NotSurjectiveAfterProjection(
            f"PT has rank {rank_PT}, expected the projection rank {rank_P}"
        )
    G = orthonormal_columns(np.eye(F_dim) - P)        # (I-P)F
    ker_T = dl.kernel_basis
    cok_T = dl.cokernel_basis
    k = ker_T.shape[1]
    kp = ker_PT.shape[1]

    # complement V of ker T inside ker PT (lift of the middle image)
    coords = ker_PT.T @ ker_T                          # (kp, k)
    if k:
        Uc, _, _ = np.linalg.svd(coords)
        V = ker_PT @ Uc[:, k:]
    else:
        V = ker_PT
    M1 = ker_PT.T @ np.hstack([ker_T, V]) if kp else np.zeros((0, 0))
    sign1 = _sign_det(M1)

    # lift S of the cokernel basis into (I-P)F: coker-projection of S is cok_T
    c = cok_T.shape[1]
    if c:
        A = cok_T.T @ G
        S = G @ np.linalg.pinv(A)
    else:
        S = np.zeros((F_dim, 0))
    M2 = G.T @ np.hstack([T @ V, S]) if G.shape[1] else np.zeros((0, 0))
    sign2 = _sign_det(M2)

    return StabilizationResult(sign=dl.sign * sign1 * sign2, kernel_basis=ker_PT, complement_basis=G)


def bordered_sign(T, kernel_basis, cokernel_basis) -> int:
    """Dense-determinant orientation of an index-0 operator with given bases.

    sign det [[T, coker], [kernel^T, 0]]; the bordered matrix is invertible
    exactly when the bases are correct.  Used as an independent oracle for
    the exact-sequence convention.
    """
    T = np.atleast_2d(np.asarray(T, dtype=float))
    k = kernel_basis.shape[1]
    Bd = np.block([
        [T, cokernel_basis],
        [kernel_basis.T, np.zeros((k, cokernel_basis.shape[1]))],
    ])
    return _sign_det(Bd)


@dataclass(frozen=True)
class OrientationTransport:
    """A sampled operator path with a common projection certified along it.

    operators[i] is T_{t_i} on a grid of [0, 1]; `projection` P satisfies
    P T_t surjective onto range(P) at every sample, with the smallest
    singular value of PT_t (as map onto range P) at least `min_sv`.
    """

    operators: tuple
    projection: np.ndarray
    min_sv: float
    grid: tuple = ()


SUSPECT_SV_REL = 0.05


def common_projection(operators, cutoff_rel: float = SV_CUTOFF_REL,
                      suspect_rel: float = SUSPECT_SV_REL):
    """A projection P with PT_t surjective onto range(P) for all samples.

    First tries the complement of coker(T_0); on failure accumulates
    near-cokernel directions over the grid and projects along their joint
    span.  Accumulation is deliberately generous (any singular direction
    below suspect_rel of the path's largest singular value contributes):
    over-projecting is harmless because the stabilized sign is independent
    of the admissible projection, while under-projecting near an
    between-samples crossing would silently flip it.
    """
    ops = [np.atleast_2d(np.asarray(T, dtype=float)) for T in operators]
    F_dim = ops[0].shape[0]

    def admissible(P):
        rank_P = int(np.round(np.trace(P)))
        worst = np.inf
        for T in ops:
            PT = P @ T
            s = np.linalg.svd(PT, compute_uv=False)
            if s.size < rank_P or (rank_P and s[rank_P - 1] <= cutoff_rel * max(s[0], 1.0)):
                return None
            if rank_P:
                worst = min(worst, s[rank_P - 1])
        return worst if np.isfinite(worst) else 1.0

    _, _, cok0, _ = svd_split(ops[0], cutoff_rel)
    P0 = np.eye(F_dim) - cok0 @ cok0.T
    worst = admissible(P0)
    if worst is not None and all(
        np.linalg.svd(P0 @ T, compute_uv=False)[int(np.round(np.trace(P0))) - 1]
        > suspect_rel * max(np.linalg.svd(T, compute_uv=False)[0], 1.0)
        for T in ops if int(np.round(np.trace(P0)))
    ):
        return P0, worst
    scale = max(max(np.linalg.svd(T, compute_uv=False)[0] for T in ops), 1.0)
    pieces = []
    for T in ops:
        U, s, _ = np.linalg.svd(T)
        low = U[:, [i for i in range(min(T.shape)) if s[i] <= suspect_rel * scale]]
        tail = U[:, min(T.shape):]
        if low.size or tail.size:
            pieces.append(np.hstack([low, tail]) if tail.size else low)
    C = orthonormal_columns(np.hstack(pieces)) if pieces else np.zeros((F_dim, 0))
    P = np.eye(F_dim) - C @ C.T
    worst = admissible(P)
    if worst is None:
        raise NotSurjectiveAfterProjection(
            "no common projection found: accumulated cokernel span still blocks surjectivity"
        )
    return P, worst


def build_transport(operators, grid=None, cutoff_rel: float = SV_CUTOFF_REL) -> OrientationTransport:
    ops = tuple(np.atleast_2d(np.asarray(T, dtype=float)) for T in operators)
    P, worst = common_projection(ops, cutoff_rel)
    if grid is None:
        grid = tuple(np.linspace(0.0, 1.0, len(ops)))
    return OrientationTransport(operators=ops, projection=P, min_sv=worst, grid=tuple(grid))


def _transport_frames(transport: OrientationTransport):
    """Parallel-transport an orthonormal kernel frame along the path.

    Returns (start SVD basis, final frame).  Each step projects the previous
    frame onto the next kernel and re-orthonormalizes with a positive-diagonal
    QR, so the frame itself carries the transported orientation.
    """
    P = transport.projection
    frames = None
    start_basis = None
    for T in transport.operators:
        _, ker, _, _ = svd_split(P @ T)
        if frames is None:
            start_basis = ker
            frames = ker
            continue
        if ker.shape[1] != frames.shape[1]:
            raise GridTooCoarse(
                f"kernel dimension jumped from {frames.shape[1]} to {ker.shape[1]}; refine the grid"
            )
        coords = ker.T @ frames
        if frames.shape[1]:
            Q, R = np.linalg.qr(coords)
            flip = np.sign(np.diag(R))
            flip[flip == 0] = 1.0
            Q = Q * flip
            new_frame = ker @ Q
            jump = np.linalg.norm(new_frame - frames)
            if jump > FRAME_JUMP_BOUND:
                raise GridTooCoarse(
                    f"frame jump {jump:.3f} exceeds {FRAME_JUMP_BOUND}; refine the grid"
                )
            frames = new_frame
        else:
            frames = ker
    return start_basis, frames


def continue_orientation(transport: OrientationTransport, start_sign: int = 1) -> int:
    """Transport an orientation of det(T_0) to det(T_1) along the path.

    end sign = start sign x (stabilization sign at 0) x (frame transport
    sign) x (stabilization sign at 1).  Reversing the path inverts the
    transport.
    """
    ops = transport.operators
    P = transport.projection
    dl0 = determinant_line(ops[0])
    dl1 = determinant_line(ops[-1])
    stab0 = stabilize(dl0, P)
    stab1 = stabilize(dl1, P)

    start_basis, final_frame = _transport_frames(transport)
    del start_basis  # the initial frame is the SVD basis used by stab0
    if final_frame.shape[1]:
        M = stab1.kernel_basis.T @ final_frame
        transport_sign = _sign_det(M)
    else:
        transport_sign = 1
    return int(np.sign(start_sign)) * stab0.sign * transport_sign * stab1.sign


@dataclass(frozen=True)
class OrientationReference:
    """Reference orientation for signing zeros.

    kind "ambient": the constant orientation of the window trivialization
    (max wedge of domain) ⊗ (max wedge of target)*; agreement with the
    natural orientation of an isomorphism f'(x) is then sign(det f'(x)).

    kind "base_zero": the natural orientation pinned at `base_point`;
    agreement at x is computed by transporting it along the straight operator
    segment from f'(base) to f'(x).
    """

    kind: str = "ambient"
    base_point: np.ndarray | None = None
    samples: int = 33


AMBIENT_REFERENCE = OrientationReference(kind="ambient")


def sign_of_zero(jacobian_at, x, reference: OrientationReference = AMBIENT_REFERENCE) -> int:
    """Sign of a transversal zero x relative to a reference orientation.

    jacobian_at(point) must return the (square) linearization matrix.
    Raises Singular when f'(x) is not invertible.

    For the ambient reference the answer is sign(det f'(x)).  For a
    base-zero reference, continuation along any operator path connecting
    f'(base) to f'(x) inside the (contractible) space of square matrices is
    path independent and reduces to sign(det f'(x)) * sign(det f'(base));
    that reduction is evaluated directly.  `continue_orientation` performs
    the equivalent discrete transport when an explicit path is of interest.
    """
    x = np.asarray(x, dtype=float)
    Jx = np.atleast_2d(np.asarray(jacobian_at(x), dtype=float))
    det = np.linalg.det(Jx)
    s = np.linalg.svd(Jx, compute_uv=False)
    if s[-1] <= SV_CUTOFF_REL * max(s[0], 1.0):
        raise Singular("linearization at the zero is not invertible")
    if reference.kind == "ambient":
        return 1 if det > 0 else -1
    if reference.kind != "base_zero" or reference.base_point is None:
        raise ValueError(f"unknown orientation reference {reference.kind!r}")
    base = np.asarray(reference.base_point, dtype=float)
    Jb = np.atleast_2d(np.asarray(jacobian_at(base), dtype=float))
    det_b = np.linalg.det(Jb)
    sb = np.linalg.svd(Jb, compute_uv=False)
    if sb[-1] <= SV_CUTOFF_REL * max(sb[0], 1.0):
        raise Singular("linearization at the reference zero is not invertible")
    return (1 if det > 0 else -1) * (1 if det_b > 0 else -1)


def linearization_path(f, a, b, samples: int = 33):
    """Jacobians of f along the straight segment from a to b (FD)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ts = np.linspace(0.0, 1.0, samples)
    return [fd_jacobian(f, (1 - t) * a + t * b) for t in ts]
