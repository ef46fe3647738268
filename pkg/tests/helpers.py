"""Shared test utilities: finite-difference gradient checking."""

import numpy as np

from infill import tensor as T


def finite_diff_grad(fn, param, h=1e-5):
    """Central-difference gradient of scalar fn() wrt one parameter tensor.

    fn must recompute the forward value from param.data on every call; the
    array is perturbed in place and restored.
    """
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn()
        flat[i] = orig - h
        fm = fn()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def analytic_grads(build_loss, params):
    """Run one taped forward/backward; returns {name: grad array}."""
    for p in params.values():
        p.zero_grad()
    with T.Tape() as tape:
        loss = build_loss()
        tape.backward(loss)
    return {name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
            for name, p in params.items()}


def gradcheck(build_loss, params, rtol=1e-6, atol=1e-9, h=1e-5):
    """Assert analytic gradients match central differences for every param.

    Meant to run under float64 (T.use_dtype("float64")); rtol matches the
    verification tolerance, atol absorbs finite-difference noise on
    near-zero entries.
    """
    got = analytic_grads(build_loss, params)

    def value():
        return build_loss().item()

    for name, p in params.items():
        want = finite_diff_grad(value, p, h=h)
        np.testing.assert_allclose(
            got[name], want, rtol=rtol, atol=atol,
            err_msg=f"gradient mismatch for {name}")


def sample_coord_gradcheck(build_loss, params, rng, n_coords=24,
                           rtol=1e-5, atol=1e-8, h=1e-5):
    """Gradcheck on a random subset of parameter coordinates (full models)."""
    got = analytic_grads(build_loss, params)

    def value():
        return build_loss().item()

    names = sorted(params)
    sizes = np.array([params[n].size for n in names], dtype=np.float64)
    probs = sizes / sizes.sum()
    for _ in range(n_coords):
        name = names[rng.choice(len(names), p=probs)]
        p = params[name]
        idx = int(rng.integers(p.size))
        flat = p.data.reshape(-1)
        orig = flat[idx]
        flat[idx] = orig + h
        fp = value()
        flat[idx] = orig - h
        fm = value()
        flat[idx] = orig
        numeric = (fp - fm) / (2.0 * h)
        analytic = got[name].reshape(-1)[idx]
        np.testing.assert_allclose(
            analytic, numeric, rtol=rtol, atol=atol,
            err_msg=f"gradient mismatch for {name}[{idx}]")
