"""w2geo — quadratic Wasserstein geometry on curved model spaces.

Exact discrete optimal transport, displacement interpolation, Fréchet means,
Wasserstein barycenters and isometry-group projections on Euclidean space,
round spheres, hyperbolic space, the flat cylinder and the balloon on a
string, with seeded experiments that check variance inequalities on each.

Typical usage::

    from w2geo.config import W2Config
    from w2geo.geometry import Space, make_point
    from w2geo.measure import uniform
    from w2geo.transport import solve_ot
    from w2geo.interpolate import displacement_path
    from w2geo.frechet import path_variances

    space = Space.hyperbolic(2)
    mu    = uniform([make_point(space, [0.0, 0.0]), make_point(space, [1.0, 0.0])])
    nu    = uniform([make_point(space, [0.0, 1.0]), make_point(space, [1.0, 1.0])])
    path  = displacement_path(solve_ot(mu, nu))
    var_t = path_variances(path)
"""

__version__ = "0.1.0"
