"""Trilinear hexahedral element tables: shape functions, Gauss rule, Jacobians.

Reference element is [-1, 1]^3 with the VTK node ordering (bottom quad
counter-clockwise, then top quad). All mesh-level routines are vectorized
over elements.
"""
import numpy as np

from .errors import GeometryError

# VTK_HEXAHEDRON corner signs, node a at (xi_a, eta_a, zeta_a)
CORNERS = np.array(
    [
        [-1, -1, -1],
        [+1, -1, -1],
        [+1, +1, -1],
        [-1, +1, -1],
        [-1, -1, +1],
        [+1, -1, +1],
        [+1, +1, +1],
        [-1, +1, +1],
    ],
    dtype=float,
)

_G1 = 1.0 / np.sqrt(3.0)


def gauss2x2x2():
    """Return (points (8,3), weights (8,)) of the 2x2x2 Gauss rule."""
    pts = np.array(
        [[sx * _G1, sy * _G1, sz * _G1] for sz in (-1, 1) for sy in (-1, 1) for sx in (-1, 1)]
    )
    return pts, np.ones(8)


def shape_values(points):
    """Trilinear shape functions at reference points, shape (nq, 8)."""
    points = np.atleast_2d(points)
    xi, eta, zeta = points[:, 0:1], points[:, 1:2], points[:, 2:3]
    c = CORNERS
    return 0.125 * (1 + xi * c[:, 0]) * (1 + eta * c[:, 1]) * (1 + zeta * c[:, 2])


def shape_gradients(points):
    """Reference gradients d(phi)/d(xi), shape (nq, 8, 3)."""
    points = np.atleast_2d(points)
    nq = points.shape[0]
    out = np.empty((nq, 8, 3))
    xi, eta, zeta = points[:, 0:1], points[:, 1:2], points[:, 2:3]
    c = CORNERS
    out[:, :, 0] = 0.125 * c[:, 0] * (1 + eta * c[:, 1]) * (1 + zeta * c[:, 2])
    out[:, :, 1] = 0.125 * c[:, 1] * (1 + xi * c[:, 0]) * (1 + zeta * c[:, 2])
    out[:, :, 2] = 0.125 * c[:, 2] * (1 + xi * c[:, 0]) * (1 + eta * c[:, 1])
    return out


class QuadData:
    """Per-element quadrature tables for a hex mesh.

    Attributes
    ----------
    grads : (ne, nq, 8, 3) world-space shape gradients
    wdet : (ne, nq) quadrature weight times |det J|
    points : (ne, nq, 3) world coordinates of quadrature points
    shapes : (nq, 8) reference shape values
    """

    def __init__(self, nodes, hexes, check_jacobian=True):
        pts, wts = gauss2x2x2()
        dN = shape_gradients(pts)  # (nq, 8, 3)
        N = shape_values(pts)
        X = nodes[hexes]  # (ne, 8, 3)
        # J[e,q,i,j] = d x_i / d xi_j
        J = np.einsum("eai,qaj->eqij", X, dN)
        detJ = np.linalg.det(J)
        if check_jacobian and np.any(detJ <= 0.0):
            bad = np.argwhere(detJ <= 0.0)
            raise GeometryError(
                f"non-positive Jacobian in {len(np.unique(bad[:, 0]))} element(s), "
                f"first at element {bad[0, 0]} (det={detJ[bad[0, 0], bad[0, 1]]:.3e})"
            )
        Jinv = np.linalg.inv(J)
        self.grads = np.einsum("qaj,eqji->eqai", dN, Jinv)
        self.wdet = detJ * wts[None, :]
        self.points = np.einsum("qa,eai->eqi", N, X)
        self.shapes = N
        self._X = X

    @property
    def volume(self):
        return float(self.wdet.sum())

    def enhanced_gradients(self):
        """Gradients of the three incompatible bubble modes, mean-corrected.

        Mode m has reference gradient -2*xi_m e_m, pushed forward with the
        element-center Jacobian and corrected to zero element mean so that
        constant stress states never activate the modes (patch test).
        Returns (ne, nq, 3, 3) with axes (element, qp, mode, world component).
        """
        if not hasattr(self, "_enh"):
            self._enh = self._build_enhanced()
        return self._enh

    def _build_enhanced(self):
        pts, _ = gauss2x2x2()
        dN0 = shape_gradients(np.zeros((1, 3)))[0]  # (8, 3)
        J0 = np.einsum("eai,aj->eij", self._X, dN0)
        J0invT = np.linalg.inv(J0).transpose(0, 2, 1)
        # g[e,q,m,j] = -2*xi_m(q) * (J0^{-T})_{j m}
        g = -2.0 * np.einsum("qm,ejm->eqmj", pts, J0invT)
        vol = self.wdet.sum(axis=1)
        mean = np.einsum("eqmj,eq->emj", g, self.wdet) / vol[:, None, None]
        return g - mean[:, None, :, :]


def node_integration_weights(quad, n_nodes, hexes):
    """Lumped weights w_a = integral of shape function a over the mesh."""
    w = np.zeros(n_nodes)
    contrib = np.einsum("qa,eq->ea", quad.shapes, quad.wdet)
    np.add.at(w, hexes, contrib)
    return w
