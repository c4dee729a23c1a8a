"""NumPy fallback for the compiled kernels (same signatures as ``_ckernels``).

Loops run over terms and time steps; each operation is vectorized across
the batch of states.
"""
import numpy as np

HORIZON, CONVERGED, ESCAPED, OVERFLOW = 0, 1, 2, 3


def _plan(coef, comp, exps):
    plan = []
    for k in range(coef.shape[0]):
        factors = [(j, int(exps[k, j])) for j in range(exps.shape[1]) if exps[k, j]]
        plan.append((float(coef[k]), int(comp[k]), factors))
    return plan


@np.errstate(over="ignore", invalid="ignore")
def _field(plan, degree, x):
    # overflow is detected and reported by the callers, not warned about
    S, n = x.shape
    pw = []
    for j in range(n):
        col = [None, x[:, j]]
        for p in range(2, degree + 1):
            col.append(col[-1] * x[:, j])
        pw.append(col)
    out = np.zeros((S, n))
    for c, i, factors in plan:
        t = c * pw[factors[0][0]][factors[0][1]]
        for j, e in factors[1:]:
            t = t * pw[j][e]
        out[:, i] += t
    return out


@np.errstate(over="ignore", invalid="ignore")
def _step(plan, degree, x, h):
    k1 = _field(plan, degree, x)
    k2 = _field(plan, degree, x + (0.5 * h) * k1)
    k3 = _field(plan, degree, x + (0.5 * h) * k2)
    k4 = _field(plan, degree, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def eval_field(coef, comp, exps, degree, x):
    return _field(_plan(coef, comp, exps), degree, x)


def rk4_steps(coef, comp, exps, degree, x, h, nsteps, last_h):
    plan = _plan(coef, comp, exps)
    x = np.array(x, dtype=np.float64)
    fail = np.full(x.shape[0], -1, dtype=np.intp)
    live = np.arange(x.shape[0])
    sizes = [h] * nsteps + ([last_h] if last_h > 0 else [])
    for s, hs in enumerate(sizes):
        if live.size == 0:
            break
        nxt = _step(plan, degree, x[live], hs)
        ok = np.all(np.isfinite(nxt), axis=1)
        x[live[ok]] = nxt[ok]
        fail[live[~ok]] = s
        live = live[ok]
    return x, fail


def _nearest(fps, x, radius):
    """Index of the nearest fixed point within ``radius`` per row, or -1."""
    if fps.shape[0] == 0:
        return np.full(x.shape[0], -1, dtype=np.intp)
    d = np.sqrt(((x[:, None, :] - fps[None, :, :]) ** 2).sum(axis=2))
    idx = np.argmin(d, axis=1)
    return np.where(d[np.arange(x.shape[0]), idx] < radius, idx, -1)


def _escape_code(x, lower, upper):
    low = x < lower
    high = x > upper
    code = np.full(x.shape[0], -1, dtype=np.intp)
    for j in range(x.shape[1] - 1, -1, -1):
        code = np.where(high[:, j], 2 * j + 1, code)
        code = np.where(low[:, j], 2 * j, code)
    return code


def integrate(coef, comp, exps, degree, starts, h, max_steps, lower, upper,
              fps, conv_radius, field_tol, conv_count, record):
    plan = _plan(coef, comp, exps)
    x = np.array(starts, dtype=np.float64)
    S = x.shape[0]
    status = np.full(S, HORIZON, dtype=np.intp)
    target = np.full(S, -1, dtype=np.intp)
    steps = np.zeros(S, dtype=np.intp)
    count = np.zeros(S, dtype=np.intp)
    path = [x[0].copy()] if record else None

    done = np.zeros(S, dtype=bool)
    esc = _escape_code(x, lower, upper)
    status[esc >= 0] = ESCAPED
    target[esc >= 0] = esc[esc >= 0]
    done |= esc >= 0
    f = _field(plan, degree, x)
    near = _nearest(fps, x, conv_radius)
    hit = (~done) & (near >= 0) & (np.sqrt((f * f).sum(axis=1)) < field_tol)
    status[hit] = CONVERGED
    target[hit] = near[hit]
    done |= hit

    live = np.flatnonzero(~done)
    step = 0
    while live.size and step < max_steps:
        step += 1
        nxt = _step(plan, degree, x[live], h)
        finite = np.all(np.isfinite(nxt), axis=1)
        bad = live[~finite]
        status[bad] = OVERFLOW
        steps[bad] = step - 1
        live, nxt = live[finite], nxt[finite]
        x[live] = nxt
        steps[live] = step
        if record and live.size:
            path.append(nxt[0].copy())

        esc = _escape_code(nxt, lower, upper)
        out = esc >= 0
        status[live[out]] = ESCAPED
        target[live[out]] = esc[out]
        live, nxt = live[~out], nxt[~out]

        if fps.shape[0] and live.size:
            f = _field(plan, degree, nxt)
            near = _nearest(fps, nxt, conv_radius)
            good = (near >= 0) & (np.sqrt((f * f).sum(axis=1)) < field_tol)
            count[live] = np.where(good, count[live] + 1, 0)
            conv = count[live] >= conv_count
            status[live[conv]] = CONVERGED
            target[live[conv]] = near[conv]
            live = live[~conv]

    rec = np.array(path) if record else None
    return status, target, steps, x, rec
