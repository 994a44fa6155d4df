"""Polynomial bases and quadrature on the reference triangle and on faces.

Volume fields are represented in a hierarchical basis on the reference
triangle with vertices (0,0), (1,0), (0,1): the three barycentric
coordinates (vertex functions), edge functions that vanish on the two
other edges, and interior bubble functions that vanish on the whole
boundary.  Skeleton fields on mesh faces use Legendre polynomials on the
canonical face parametrization, rescaled per face so that the face mass
matrix is exactly the identity.

Quadrature is Gauss-Legendre on segments and a collapsed-coordinate
tensor Gauss rule on the triangle; both are exact up to any requested
polynomial degree and have strictly positive weights.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial import legendre as npleg

#: Vertices of the reference triangle, counterclockwise.
REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

#: Local face ``l`` connects reference vertices ``LOCAL_FACES[l]``.
LOCAL_FACES = ((0, 1), (1, 2), (2, 0))

#: Gradients of the barycentric coordinates (lambda_0, lambda_1, lambda_2).
_BARY_GRADS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])

MAX_DEGREE = 10


def _legendre_table(x: np.ndarray, kmax: int) -> np.ndarray:
    """Values of P_0..P_kmax at points ``x``, shape (kmax+1, len(x))."""
    return npleg.legval(x, np.eye(kmax + 1))


def _legendre_deriv_table(x: np.ndarray, kmax: int) -> np.ndarray:
    """Values of P_0'..P_kmax' at points ``x``, shape (kmax+1, len(x))."""
    coeffs = np.zeros((kmax + 1, kmax + 1))
    for k in range(1, kmax + 1):
        d = npleg.legder(np.eye(kmax + 1)[k])
        coeffs[: d.size, k] = d
    return npleg.legval(x, coeffs)


def segment_rule(exactness: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule on [0, 1] exact for polynomials of the given degree.

    Parameters
    ----------
    exactness : int
        Highest polynomial degree integrated exactly (>= 0).

    Returns
    -------
    points, weights : ndarray
        1D arrays; weights sum to 1.
    """
    if exactness < 0:
        raise ValueError("exactness must be non-negative")
    n = exactness // 2 + 1
    x, w = npleg.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def triangle_rule(exactness: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature on the reference triangle exact to the given degree.

    Built as a tensor Gauss rule in collapsed (Duffy) coordinates
    x = (1+a)(1-b)/4, y = (1+b)/2, which integrates every bivariate
    polynomial of total degree <= exactness exactly. All weights are
    positive.

    Returns
    -------
    points : ndarray, shape (n, 2)
    weights : ndarray, shape (n,)
        Weights sum to the reference area 1/2.
    """
    if exactness < 0:
        raise ValueError("exactness must be non-negative")
    na = exactness // 2 + 1
    nb = (exactness + 1) // 2 + 1
    a, wa = npleg.leggauss(na)
    b, wb = npleg.leggauss(nb)
    A, B = np.meshgrid(a, b, indexing="ij")
    x = (1.0 + A) * (1.0 - B) / 4.0
    y = (1.0 + B) / 2.0
    w = np.outer(wa, wb) * (1.0 - B) / 8.0
    return np.column_stack([x.ravel(), y.ravel()]), w.ravel()


class VolumeBasis:
    """Hierarchical scalar basis of degree ``p`` on the reference triangle.

    Functions are ordered as: 3 vertex functions (the barycentric
    coordinates), then ``p - 1`` edge functions per local face (faces 0,
    1, 2 in turn), then ``(p-1)(p-2)/2`` bubbles.  Edge kernel and bubble
    polynomials are Legendre polynomials of the barycentric differences;
    the resulting family is linearly independent and spans all
    polynomials of total degree <= p.

    Attributes
    ----------
    degree : int
    n_funcs : int
        Equal to (p+1)(p+2)/2.
    kinds : list of str
        Per-function classification: "vertex", "edge" or "bubble".
    edge_face : list
        For edge functions, the local face they belong to (None otherwise).
    """

    def __init__(self, degree: int):
        if not 0 <= degree <= MAX_DEGREE:
            raise ValueError(f"degree must be in [0, {MAX_DEGREE}], got {degree}")
        self.degree = degree
        p = degree
        self.n_vertex = 0 if p == 0 else 3
        self.n_edge = 0 if p == 0 else 3 * (p - 1)
        self.n_bubble = 0 if p < 3 else (p - 1) * (p - 2) // 2
        self.n_funcs = (p + 1) * (p + 2) // 2
        if p == 0:
            self.kinds = ["vertex"]  # single constant function
            self.edge_face = [None]
        else:
            self.kinds = ["vertex"] * 3
            self.edge_face: list = [None] * 3
            for face in range(3):
                self.kinds += ["edge"] * (p - 1)
                self.edge_face += [face] * (p - 1)
            self.kinds += ["bubble"] * self.n_bubble
            self.edge_face += [None] * self.n_bubble
        assert len(self.kinds) == self.n_funcs

    def values(self, points: np.ndarray) -> np.ndarray:
        """Evaluate all basis functions, returns shape (n_funcs, n_points)."""
        pts = np.atleast_2d(points)
        x, y = pts[:, 0], pts[:, 1]
        p = self.degree
        if p == 0:
            return np.ones((1, pts.shape[0]))
        lam = np.stack([1.0 - x - y, x, y])
        rows = [lam[0], lam[1], lam[2]]
        for a, b in LOCAL_FACES:
            leg = _legendre_table(lam[b] - lam[a], max(p - 2, 0))
            for k in range(p - 1):
                rows.append(lam[a] * lam[b] * leg[k])
        if p >= 3:
            bub = lam[0] * lam[1] * lam[2]
            leg1 = _legendre_table(lam[1] - lam[0], p - 3)
            leg2 = _legendre_table(2.0 * lam[2] - 1.0, p - 3)
            for total in range(p - 2):
                for i in range(total + 1):
                    rows.append(bub * leg1[i] * leg2[total - i])
        return np.stack(rows)

    def gradients(self, points: np.ndarray) -> np.ndarray:
        """Reference-coordinate gradients, shape (n_funcs, n_points, 2)."""
        pts = np.atleast_2d(points)
        x, y = pts[:, 0], pts[:, 1]
        p = self.degree
        npts = pts.shape[0]
        if p == 0:
            return np.zeros((1, npts, 2))
        lam = np.stack([1.0 - x - y, x, y])
        g = _BARY_GRADS
        rows = [np.broadcast_to(g[i], (npts, 2)).copy() for i in range(3)]
        for a, b in LOCAL_FACES:
            d = lam[b] - lam[a]
            leg = _legendre_table(d, max(p - 2, 0))
            dleg = _legendre_deriv_table(d, max(p - 2, 0))
            gprod = np.outer(lam[b], g[a]) + np.outer(lam[a], g[b])
            gdiff = g[b] - g[a]
            for k in range(p - 1):
                grad = gprod * leg[k][:, None]
                grad += np.outer(lam[a] * lam[b] * dleg[k], gdiff)
                rows.append(grad)
        if p >= 3:
            bub = lam[0] * lam[1] * lam[2]
            gbub = (
                np.outer(lam[1] * lam[2], g[0])
                + np.outer(lam[0] * lam[2], g[1])
                + np.outer(lam[0] * lam[1], g[2])
            )
            d1 = lam[1] - lam[0]
            d2 = 2.0 * lam[2] - 1.0
            leg1 = _legendre_table(d1, p - 3)
            dleg1 = _legendre_deriv_table(d1, p - 3)
            leg2 = _legendre_table(d2, p - 3)
            dleg2 = _legendre_deriv_table(d2, p - 3)
            gd1 = g[1] - g[0]
            gd2 = 2.0 * g[2]
            for total in range(p - 2):
                for i in range(total + 1):
                    j = total - i
                    grad = gbub * (leg1[i] * leg2[j])[:, None]
                    grad += np.outer(bub * dleg1[i] * leg2[j], gd1)
                    grad += np.outer(bub * leg1[i] * dleg2[j], gd2)
                    rows.append(grad)
        return np.stack(rows)


def make_volume_basis(degree: int) -> VolumeBasis:
    """Build the hierarchical volume basis of the given degree (0..10)."""
    return VolumeBasis(degree)


class FaceBasis:
    """Orthonormal polynomial basis on a physical face of given length.

    The m-th function is sqrt((2m+1)/L) * P_m(2t-1) in the canonical face
    coordinate t in [0, 1], so that the L2 mass matrix of the face is
    exactly the identity.
    """

    def __init__(self, degree: int, length: float):
        if degree < 0:
            raise ValueError("degree must be non-negative")
        if not length > 0.0:
            raise ValueError("degenerate face: length must be positive")
        self.degree = degree
        self.length = float(length)
        self.n_funcs = degree + 1
        self._scale = np.sqrt((2.0 * np.arange(degree + 1) + 1.0) / self.length)

    def values(self, t: np.ndarray) -> np.ndarray:
        """Evaluate all face functions at coordinates t, shape (p+1, n)."""
        t = np.atleast_1d(t)
        return self._scale[:, None] * _legendre_table(2.0 * t - 1.0, self.degree)


def make_face_basis(degree: int, length: float) -> FaceBasis:
    """Build the orthonormal face basis for a face of the given length."""
    return FaceBasis(degree, length)


def scaled_legendre_table(degree: int, t: np.ndarray) -> np.ndarray:
    """Length-free part sqrt(2m+1) * P_m(2t-1) of the face basis, (p+1, n).

    Dividing by sqrt(L) gives the orthonormal basis of a face of length L.
    """
    t = np.atleast_1d(t)
    scale = np.sqrt(2.0 * np.arange(degree + 1) + 1.0)
    return scale[:, None] * _legendre_table(2.0 * t - 1.0, degree)


def trace_evaluate(
    basis: VolumeBasis,
    local_face: int,
    t: np.ndarray,
    reverse: bool = False,
) -> np.ndarray:
    """Values of all volume functions on a reference edge, (n_funcs, n_pts).

    The edge is parametrized by t in [0, 1] from the first to the second
    vertex of ``LOCAL_FACES[local_face]``; ``reverse=True`` runs the
    parameter the opposite way, which lets callers follow a globally
    agreed face orientation.
    """
    if local_face not in (0, 1, 2):
        raise ValueError("local_face must be 0, 1 or 2")
    a, b = LOCAL_FACES[local_face]
    va, vb = REF_VERTICES[a], REF_VERTICES[b]
    if reverse:
        va, vb = vb, va
    t = np.atleast_1d(t)
    pts = va[None, :] + t[:, None] * (vb - va)[None, :]
    return basis.values(pts)
