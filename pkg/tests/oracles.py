"""Independent brute-force oracles used to freeze expected test values."""

from fractions import Fraction

import numpy as np
from scipy.integrate import quad

from grushin_lab.classifier import Poly


def gaussian_moment(k: int) -> float:
    """<t^k phi, phi> for the normalized Gaussian exp(-t^2/2)/pi^(1/4)."""
    num = quad(lambda t: t ** k * np.exp(-t ** 2), -np.inf, np.inf)[0]
    den = quad(lambda t: np.exp(-t ** 2), -np.inf, np.inf)[0]
    return num / den


def quartic_moment(k: int) -> float:
    """<t^k phi, phi> for the normalized kernel exp(-t^4/4)."""
    num = quad(lambda t: t ** k * np.exp(-t ** 4 / 2), 0, 30)[0]
    den = quad(lambda t: np.exp(-t ** 4 / 2), 0, 30)[0]
    return num / den if k % 2 == 0 else 0.0


def odd_kernel_profile(h: int, t: np.ndarray) -> np.ndarray:
    """Unnormalized exact kernel exp(-t^(h+1)/(h+1)) of the odd-h factorized
    model at the ground critical coupling."""
    return np.exp(-t ** (h + 1) / (h + 1))


def random_factor_chain(rng, max_real_roots=3, max_mult=4):
    """Build (g, f, expected_verdict_data) from explicit factor chains.

    Returns (g, f, expected_loss or None, dead) where the expected loss is
    computed directly from the constructed multiplicities -- independent of
    any gcd machinery.
    """
    roots = list(rng.choice(np.arange(-4, 5), size=rng.integers(1, max_real_roots + 1),
                            replace=False))
    g_mults = [int(rng.integers(1, max_mult + 1)) for _ in roots]
    f_mults = [int(rng.integers(0, 4)) for _ in roots]
    g = Poly((Fraction(int(rng.choice([1, 2, 3, -2]))),))
    f = Poly((Fraction(int(rng.choice([1, -1, 2]))),))
    for r, m in zip(roots, g_mults):
        g = g * Poly((-Fraction(int(r)), Fraction(1))).pow(m)
    for r, k in zip(roots, f_mults):
        f = f * Poly((-Fraction(int(r)), Fraction(1))).pow(k)
    if rng.random() < 0.5:
        # a factor with no real roots must not contribute
        g = g * Poly((Fraction(1), Fraction(0), Fraction(1))).pow(
            int(rng.integers(1, 3)))
    losses = []
    for m, k in zip(g_mults, f_mults):
        if m % 2 == 0:
            losses.append(Fraction(2 * m, m + 1))
        else:
            losses.append(Fraction(2 * m + 2 * k, m + 1))
    return g, f, max(losses)
