import numpy as np

from pkgm.optim import Adam


def reference_adam(params, grads_seq, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Textbook Adam stepped in float64, independent of the implementation."""
    out = {k: v.astype(np.float64).copy() for k, v in params.items()}
    m = {k: np.zeros_like(v) for k, v in out.items()}
    v = {k: np.zeros_like(val) for k, val in out.items()}
    for t, grads in enumerate(grads_seq, start=1):
        for name, g in grads.items():
            g = g.astype(np.float64)
            m[name] = beta1 * m[name] + (1 - beta1) * g
            v[name] = beta2 * v[name] + (1 - beta2) * g * g
            m_hat = m[name] / (1 - beta1**t)
            v_hat = v[name] / (1 - beta2**t)
            out[name] -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return out


def test_matches_reference_over_several_steps():
    rng = np.random.default_rng(0)
    params = {
        "a": rng.normal(size=(3, 4)).astype(np.float64),
        "b": rng.normal(size=(2,)).astype(np.float64),
    }
    grads_seq = [
        {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(2,))} for _ in range(5)
    ]
    want = reference_adam(params, grads_seq, lr=0.05)

    opt = Adam({k: v.copy() for k, v in params.items()}, lr=0.05)
    for grads in grads_seq:
        opt.step(grads)
    for name in params:
        np.testing.assert_allclose(opt.params[name], want[name], rtol=1e-12)


def test_first_step_moves_by_roughly_lr():
    # bias correction makes the first update ~lr * sign(grad) for any grad scale
    params = {"w": np.zeros(4)}
    opt = Adam(params, lr=0.01)
    opt.step({"w": np.array([100.0, -0.001, 3.0, -7.0])})
    np.testing.assert_allclose(
        params["w"], [-0.01, 0.01, -0.01, 0.01], rtol=1e-4
    )


def test_updates_in_place():
    arr = np.ones(3)
    opt = Adam({"w": arr}, lr=0.1)
    opt.step({"w": np.ones(3)})
    assert opt.params["w"] is arr
    assert arr[0] != 1.0


def test_step_counter_shared_across_arrays():
    opt = Adam({"a": np.zeros(2), "b": np.zeros(2)}, lr=0.1)
    opt.step({"a": np.ones(2), "b": np.ones(2)})
    opt.step({"a": np.ones(2), "b": np.ones(2)})
    assert opt.t == 2
    np.testing.assert_allclose(opt.params["a"], opt.params["b"])


def test_zero_gradient_leaves_params_fixed():
    params = {"w": np.full(3, 5.0)}
    opt = Adam(params, lr=0.5)
    opt.step({"w": np.zeros(3)})
    np.testing.assert_array_equal(params["w"], np.full(3, 5.0))
