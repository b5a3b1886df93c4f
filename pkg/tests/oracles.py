"""Independent reference computations (quadrature, loops) used by the tests."""
import math

from scipy import integrate


def strategic_population_risk(base, phi, theta, dg):
    """R(phi, theta) for label-averaged zero-one loss by quadrature."""
    p, f = base.posterior, base.pdf
    lo, hi = base.support

    def accepted(x):
        xf = phi if (x < phi and phi - x <= dg) else x
        return xf >= theta

    g = lambda x: float(f(x)) * (1 - float(p(x)) if accepted(x) else float(p(x)))
    pts = [q for q in (phi - dg, phi, theta) if math.isfinite(q) and lo < q < hi]
    return integrate.quad(g, lo, hi, points=sorted(pts) or None, limit=200, epsabs=1e-12)[0]


def population_shift(base, theta, theta_cur, dg):
    """E|BR(x, theta) - BR(x, theta_cur)| by quadrature over the base density."""
    def br(x, t):
        return t if (x < t and t - x <= dg) else x

    f = lambda x: abs(br(x, theta) - br(x, theta_cur)) * float(base.pdf(x))
    lo, hi = base.support
    lo, hi = max(lo, -50.0), min(hi, 50.0)
    pts = [p for p in (theta - dg, theta, theta_cur - dg, theta_cur) if math.isfinite(p) and lo < p < hi]
    val, _ = integrate.quad(f, lo, hi, points=sorted(pts) or None, limit=200, epsabs=1e-12)
    return val
