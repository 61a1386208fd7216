"""Central-difference verification of every reverse-mode primitive.

The checker is deliberately independent of the tape: it re-evaluates the
forward closure at perturbed points and compares the quotient against the
recorded gradient.  Relative error is |ad - fd| / max(1, |ad|, |fd|), so
order-one gradients are judged near-absolutely and huge ones relatively.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T


@dataclass
class CheckReport:
    name: str
    max_rel_error: float
    tolerance: float
    n_coords: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def _rel(a, b):
    return abs(a - b) / max(1.0, abs(a), abs(b))


def finite_diff_check(f, point, tolerance=1e-6, step=1e-5, max_coords=None, rng=None, name="fn"):
    """Compare the tape gradient of scalar ``f`` at ``point`` with central differences.

    ``max_coords`` caps how many coordinates are probed (sampled with ``rng``);
    by default every coordinate is checked.
    """
    point.requires_grad = True
    point.zero_grad()
    T.reset_tape()
    y = f(point)
    if not isinstance(y, T.Tensor) or y.data.ndim != 0:
        raise T.AutodiffError("finite_diff_check needs a scalar-valued function")
    T.backward(y)
    g = point.grad if point.grad is not None else np.zeros(point.shape, dtype=point.dtype)
    g = np.asarray(g).reshape(-1)

    n = point.size
    if max_coords is not None and max_coords < n:
        rng = rng or np.random.default_rng(0)
        coords = rng.choice(n, size=max_coords, replace=False)
    else:
        coords = range(n)

    flat = point.data.reshape(-1)
    worst = 0.0
    count = 0
    with T.no_grad():
        for i in coords:
            keep = flat[i]
            flat[i] = keep + step
            hi = f(point).item()
            flat[i] = keep - step
            lo = f(point).item()
            flat[i] = keep
            fd = (hi - lo) / (2.0 * step)
            worst = max(worst, _rel(float(g[i]), fd))
            count += 1
    return CheckReport(name=name, max_rel_error=worst, tolerance=tolerance, n_coords=count)


def check_parameters(loss_fn, params, tolerance=1e-4, step=1e-5, coords_per_param=2, rng=None, name="model"):
    """Probe a multi-parameter loss: one recorded backward, then sampled
    central differences against each parameter's gradient."""
    rng = rng or np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    T.reset_tape()
    loss = loss_fn()
    T.backward(loss)
    analytic = [
        np.zeros(p.tensor.shape, dtype=p.data.dtype) if p.grad is None else p.grad.copy()
        for p in params
    ]

    worst = 0.0
    count = 0
    with T.no_grad():
        for p, g_ad in zip(params, analytic):
            flat = p.data.reshape(-1)
            n = flat.size
            k = min(coords_per_param, n)
            for i in rng.choice(n, size=k, replace=False):
                keep = flat[i]
                flat[i] = keep + step
                hi = loss_fn().item()
                flat[i] = keep - step
                lo = loss_fn().item()
                flat[i] = keep
                fd = (hi - lo) / (2.0 * step)
                worst = max(worst, _rel(float(g_ad.reshape(-1)[i]), fd))
                count += 1
    return CheckReport(name=name, max_rel_error=worst, tolerance=tolerance, n_coords=count)


# -- per-primitive cases ------------------------------------------------------

def _rand(rng, shape, dtype, lo=-1.0, hi=1.0):
    return T.Tensor(rng.uniform(lo, hi, size=shape).astype(dtype), dtype=dtype)


def _away_from_zero(rng, shape, dtype, floor=0.25):
    x = rng.uniform(floor, 1.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)
    return T.Tensor(x.astype(dtype), dtype=dtype)


def primitive_checks(dtype=np.float64, seed=0):
    """Yield (name, scalar_fn, point) covering every differentiable primitive.

    Outputs are contracted against a fixed random weighting so that
    symmetric errors cannot cancel in the reduction.
    """
    rng = np.random.default_rng(seed)

    def weighted(op, *consts):
        def make(point):
            w = consts[0]
            return T.sum_(T.mul(op(point), w))
        return make

    cases = []

    def emit(name, fn, point):
        cases.append((name, fn, point))

    # arithmetic, with broadcasting partners
    b = _rand(rng, (3, 4), dtype)
    row = _rand(rng, (4,), dtype)
    for opname, op in (("add", T.add), ("sub", T.sub), ("mul", T.mul)):
        w = _rand(rng, (3, 4), dtype)
        emit(opname, lambda p, op=op, w=w, b=b: T.sum_(T.mul(op(p, b), w)), _rand(rng, (3, 4), dtype))
        emit(opname + "/broadcast", lambda p, op=op, w=w, row=row: T.sum_(T.mul(op(p, row), w)), _rand(rng, (3, 4), dtype))
    wd = _rand(rng, (3, 4), dtype)
    den = _away_from_zero(rng, (3, 4), dtype)
    emit("div", lambda p, w=wd, den=den: T.sum_(T.mul(T.div(p, den), w)), _rand(rng, (3, 4), dtype))
    emit("div/denominator", lambda p, w=wd: T.sum_(T.mul(T.div(T.Tensor(np.ones((3, 4), dtype=dtype)), p), w)), _away_from_zero(rng, (3, 4), dtype))
    emit("neg", lambda p, w=wd: T.sum_(T.mul(T.neg(p), w)), _rand(rng, (3, 4), dtype))

    # matmul: plain, and batched against a broadcast right operand
    m2 = _rand(rng, (4, 5), dtype)
    wm = _rand(rng, (3, 5), dtype)
    emit("matmul/left", lambda p, m2=m2, wm=wm: T.sum_(T.mul(T.matmul(p, m2), wm)), _rand(rng, (3, 4), dtype))
    m1 = _rand(rng, (3, 4), dtype)
    emit("matmul/right", lambda p, m1=m1, wm=wm: T.sum_(T.mul(T.matmul(m1, p), wm)), _rand(rng, (4, 5), dtype))
    mb = _rand(rng, (2, 4, 3), dtype)
    wb = _rand(rng, (2, 4, 5), dtype)
    emit("matmul/batched-right", lambda p, mb=mb, wb=wb: T.sum_(T.mul(T.matmul(mb, p), wb)), _rand(rng, (3, 5), dtype))

    # shape movement
    wt = _rand(rng, (4, 3), dtype)
    emit("transpose", lambda p, w=wt: T.sum_(T.mul(T.transpose(p, (1, 0)), w)), _rand(rng, (3, 4), dtype))
    wr = _rand(rng, (12,), dtype)
    emit("reshape", lambda p, w=wr: T.sum_(T.mul(T.reshape(p, (12,)), w)), _rand(rng, (3, 4), dtype))
    other = _rand(rng, (2, 4), dtype)
    wc = _rand(rng, (5, 4), dtype)
    emit("concat", lambda p, o=other, w=wc: T.sum_(T.mul(T.concat([p, o], axis=0), w)), _rand(rng, (3, 4), dtype))
    ws = _rand(rng, (2, 2), dtype)
    emit("slice", lambda p, w=ws: T.sum_(T.mul(p[1:3, 0:2], w)), _rand(rng, (4, 4), dtype))

    # unaries
    wu = _rand(rng, (3, 4), dtype)
    emit("tanh", lambda p, w=wu: T.sum_(T.mul(T.tanh(p), w)), _rand(rng, (3, 4), dtype, -2, 2))
    emit("sigmoid", lambda p, w=wu: T.sum_(T.mul(T.sigmoid(p), w)), _rand(rng, (3, 4), dtype, -3, 3))
    emit("relu", lambda p, w=wu: T.sum_(T.mul(T.relu(p), w)), _away_from_zero(rng, (3, 4), dtype))
    emit("exp", lambda p, w=wu: T.sum_(T.mul(T.exp(p), w)), _rand(rng, (3, 4), dtype, -1, 1))
    emit("log", lambda p, w=wu: T.sum_(T.mul(T.log(p), w)), _rand(rng, (3, 4), dtype, 0.5, 2.0))
    emit("sqrt", lambda p, w=wu: T.sum_(T.mul(T.sqrt(p), w)), _rand(rng, (3, 4), dtype, 0.5, 2.0))
    emit("abs", lambda p, w=wu: T.sum_(T.mul(T.absolute(p), w)), _away_from_zero(rng, (3, 4), dtype))
    emit("sin", lambda p, w=wu: T.sum_(T.mul(T.sin(p), w)), _rand(rng, (3, 4), dtype, -3, 3))
    emit("power", lambda p, w=wu: T.sum_(T.mul(T.power(p, 1.7), w)), _rand(rng, (3, 4), dtype, 0.5, 2.0))
    emit("clip", lambda p, w=wu: T.sum_(T.mul(T.clip(p, -0.9, 0.9), w)), _rand(rng, (3, 4), dtype, -0.8, 0.8))

    # reductions and softmax
    emit("sum/axis", lambda p, w=_rand(rng, (4,), dtype): T.sum_(T.mul(T.sum_(p, axis=0), w)), _rand(rng, (3, 4), dtype))
    emit("sum/keepdims", lambda p, w=_rand(rng, (3, 1), dtype): T.sum_(T.mul(T.sum_(p, axis=1, keepdims=True), w)), _rand(rng, (3, 4), dtype))
    emit("mean", lambda p, w=_rand(rng, (3,), dtype): T.sum_(T.mul(T.mean(p, axis=1), w)), _rand(rng, (3, 4), dtype))
    emit("max", lambda p, w=_rand(rng, (3,), dtype): T.sum_(T.mul(T.max_(p, axis=1), w)), _rand(rng, (3, 4), dtype))
    emit("softmax", lambda p, w=wu: T.sum_(T.mul(T.softmax(p, axis=1), w)), _rand(rng, (3, 4), dtype, -2, 2))

    # losses
    labels = np.array([0, 1, 1])
    emit("cross_entropy", lambda p, labels=labels: T.cross_entropy(T.softmax(p, axis=1), labels), _rand(rng, (3, 2), dtype, -1.5, 1.5))
    cw = [0.7, 1.3]
    emit("cross_entropy/weighted", lambda p, labels=labels, cw=cw: T.cross_entropy(T.softmax(p, axis=1), labels, class_weights=cw), _rand(rng, (3, 2), dtype, -1.5, 1.5))

    # convolution / pooling
    w1 = _rand(rng, (3, 2, 3), dtype)
    b1 = _rand(rng, (3,), dtype)
    wo1 = _rand(rng, (2, 3, 4), dtype)
    emit("conv1d/x", lambda p, w=w1, b=b1, wo=wo1: T.sum_(T.mul(T.conv1d(p, w, b), wo)), _rand(rng, (2, 2, 6), dtype))
    x1 = _rand(rng, (2, 2, 6), dtype)
    emit("conv1d/w", lambda p, x=x1, b=b1, wo=wo1: T.sum_(T.mul(T.conv1d(x, p, b), wo)), _rand(rng, (3, 2, 3), dtype))
    emit("conv1d/b", lambda p, x=x1, w=w1, wo=wo1: T.sum_(T.mul(T.conv1d(x, w, p), wo)), _rand(rng, (3,), dtype))
    wo1s = _rand(rng, (2, 3, 2), dtype)
    emit("conv1d/strided-dilated", lambda p, w=w1, wo=wo1s: T.sum_(T.mul(T.conv1d(p, w, None, stride=2, dilation=2), wo)), _rand(rng, (2, 2, 8), dtype))

    w2 = _rand(rng, (3, 2, 3, 3), dtype)
    b2 = _rand(rng, (3,), dtype)
    wo2 = _rand(rng, (2, 3, 4, 4), dtype)
    emit("conv2d/x", lambda p, w=w2, b=b2, wo=wo2: T.sum_(T.mul(T.conv2d(p, w, b, padding=(1, 1)), wo)), _rand(rng, (2, 2, 4, 4), dtype))
    x2 = _rand(rng, (2, 2, 4, 4), dtype)
    emit("conv2d/w", lambda p, x=x2, b=b2, wo=wo2: T.sum_(T.mul(T.conv2d(x, p, b, padding=(1, 1)), wo)), _rand(rng, (3, 2, 3, 3), dtype))
    emit("conv2d/b", lambda p, x=x2, w=w2, wo=wo2: T.sum_(T.mul(T.conv2d(x, w, p, padding=(1, 1)), wo)), _rand(rng, (3,), dtype))

    wp = _rand(rng, (2, 2, 2, 3), dtype)
    emit("maxpool2d", lambda p, w=wp: T.sum_(T.mul(T.maxpool2d(p, (2, 2)), w)), _rand(rng, (2, 2, 5, 6), dtype))

    # gather
    ids = np.array([[0, 2, 1], [2, 2, 0]])
    we = _rand(rng, (2, 3, 4), dtype)
    emit("embedding", lambda p, ids=ids, w=we: T.sum_(T.mul(T.embedding(p, ids), w)), _rand(rng, (3, 4), dtype))

    # batch normalization, both modes
    gamma = _rand(rng, (3,), dtype, 0.5, 1.5)
    beta = _rand(rng, (3,), dtype)
    wn = _rand(rng, (5, 3), dtype)

    def bn_train(p, gamma=gamma, beta=beta, w=wn):
        rm = T.Tensor(np.zeros(3, dtype=dtype))
        rv = T.Tensor(np.ones(3, dtype=dtype))
        return T.sum_(T.mul(T.batch_norm(p, gamma, beta, rm, rv, training=True), w))

    emit("batch_norm/train-x", bn_train, _rand(rng, (5, 3), dtype))
    xn = _rand(rng, (5, 3), dtype)

    def bn_train_gamma(p, x=xn, beta=beta, w=wn):
        rm = T.Tensor(np.zeros(3, dtype=dtype))
        rv = T.Tensor(np.ones(3, dtype=dtype))
        return T.sum_(T.mul(T.batch_norm(x, p, beta, rm, rv, training=True), w))

    emit("batch_norm/train-gamma", bn_train_gamma, _rand(rng, (3,), dtype, 0.5, 1.5))

    rm0 = np.asarray(rng.uniform(-0.3, 0.3, 3), dtype=dtype)
    rv0 = np.asarray(rng.uniform(0.5, 1.5, 3), dtype=dtype)

    def bn_eval(p, gamma=gamma, beta=beta, w=wn):
        rm = T.Tensor(rm0.copy())
        rv = T.Tensor(rv0.copy())
        return T.sum_(T.mul(T.batch_norm(p, gamma, beta, rm, rv, training=False), w))

    emit("batch_norm/eval-x", bn_eval, _rand(rng, (5, 3), dtype))

    return cases


def run_primitive_suite(dtype=np.float64, tolerance=1e-6, seed=0):
    """Run every registered primitive case; returns the list of reports."""
    reports = []
    for name, fn, point in primitive_checks(dtype=dtype, seed=seed):
        reports.append(finite_diff_check(fn, point, tolerance=tolerance, name=name))
    return reports
