"""Independent reference solutions used by the tests."""
import numpy as np

from charwave.initialdata import eval_profile


def dalembert(phi, psi, eps, x, t):
    """``(u_t, u_x)`` of the c = 1 wave equation with data (eps phi, eps psi)."""
    fp, fm = eval_profile(phi, x + t)[1], eval_profile(phi, x - t)[1]
    gp, gm = eval_profile(psi, x + t)[0], eval_profile(psi, x - t)[0]
    ut = 0.5 * eps * (fp - fm) + 0.5 * eps * (gp + gm)
    ux = 0.5 * eps * (fp + fm) + 0.5 * eps * (gp - gm)
    return ut, ux


def riccati_pole(F0, gamma):
    return 1.0 / (gamma * F0)
