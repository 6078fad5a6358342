"""Direct-summation reference implementations written with plain loops.

These share no code with the package beyond the drift callbacks and are used
to check the vectorised estimators on tiny instances.
"""

import math


def r_h(h, t, s):
    return 0.5 * (t ** (2 * h) + s ** (2 * h) - abs(t - s) ** (2 * h))


def cell_mass(h, times, j, k):
    return (r_h(h, times[j + 1], times[k + 1]) - r_h(h, times[j + 1], times[k])
            - r_h(h, times[j], times[k + 1]) + r_h(h, times[j], times[k]))


def euler_paths(b, theta, sigma, dt, x0, increments):
    """b(x, xs) -> float for a particle at x among positions xs."""
    n_part, n = len(x0), len(increments[0])
    paths = [[x0[i]] for i in range(n_part)]
    for j in range(n):
        xs = [paths[i][j] for i in range(n_part)]
        for i in range(n_part):
            paths[i].append(xs[i] + dt * theta * b(xs[i], xs) + sigma * increments[i][j])
    return paths


def _mean(xs):
    return sum(xs) / len(xs)


def psi_strat(b, paths, dt):
    n_part, n = len(paths), len(paths[0]) - 1
    psi = strat = 0.0
    for i in range(n_part):
        for j in range(n):
            xs = [paths[k][j] for k in range(n_part)]
            v = b(paths[i][j], xs)
            psi += v * v * dt
            strat += v * (paths[i][j + 1] - paths[i][j])
    return psi, strat


def correction(h, times, kernel):
    """sum over cells strictly below the diagonal of mass * corner-mean of kernel(t_idx, s_idx)."""
    n = len(times) - 1
    total = 0.0
    for j in range(n):
        for k in range(j):
            corners = [kernel(a, c) for a in (j, j + 1) for c in (k, k + 1)]
            total += cell_mass(h, times, j, k) * sum(corners) / 4
    return total


def ratio_theta(b, dxb, theta0, sigma, h, dt, x0, increments, eps):
    n = len(increments[0])
    times = [j * dt for j in range(n + 1)]
    base = euler_paths(b, theta0, sigma, dt, x0, increments)
    psi, strat = psi_strat(b, base, dt)
    corr = 0.0
    for i in range(len(x0)):
        shifted_x0 = list(x0)
        shifted_x0[i] += eps
        shifted = euler_paths(b, theta0, sigma, dt, shifted_x0, increments)
        q = [(shifted[i][j] - base[i][j]) / eps for j in range(n + 1)]
        slope = [dxb(base[i][j], [p[j] for p in base]) for j in range(n + 1)]
        corr += correction(h, times, lambda t, s: slope[t] * q[t] / max(q[s], 1.0))
    return (strat - sigma**2 * corr) / psi


def fixed_point_map(b, dxb, sigma, h, dt, paths):
    n = len(paths[0]) - 1
    times = [j * dt for j in range(n + 1)]
    psi, strat = psi_strat(b, paths, dt)
    slopes, cums = [], []
    for i in range(len(paths)):
        slope = [dxb(paths[i][j], [p[j] for p in paths]) for j in range(n + 1)]
        cum = [0.0]
        for j in range(n):
            cum.append(cum[-1] + slope[j] * dt)
        slopes.append(slope)
        cums.append(cum)

    def f(theta):
        corr = 0.0
        for i in range(len(paths)):
            sl, a = slopes[i], cums[i]
            corr += correction(h, times, lambda t, s: sl[t] * math.exp(theta * (a[t] - a[s])))
        return (strat - sigma**2 * corr) / psi
    return f


def least_squares(b, paths, dt):
    psi, strat = psi_strat(b, paths, dt)
    return strat / psi


def contrast(b, paths, dt, h, theta):
    n_part, n = len(paths), len(paths[0]) - 1
    q = 0.0
    for j in range(n):
        xs = [paths[k][j] for k in range(n_part)]
        for i in range(n_part):
            r = paths[i][j + 1] - paths[i][j] - dt * theta * b(paths[i][j], xs)
            q += r * r - dt ** (2 * h)
    return q


def arctan_b(x, xs):
    return 2 - math.atan(x - _mean(xs))


def arctan_dxb(x, xs):
    return -1 / (1 + (x - _mean(xs)) ** 2)


def linear_b(x, xs):
    return x - _mean(xs)


def linear_dxb(x, xs):
    return 1.0
