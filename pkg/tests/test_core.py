import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from pairlat.core import (
    FiniteGuard,
    FunctionalAdam,
    OptState,
    ParamSet,
    adam_step,
    affine,
    cosine_similarity,
    grad_check,
    leaky_relu,
    leaky_relu_inverse,
    orthogonal_init,
    pairwise_cosine_similarity,
    value_and_grad,
)
from pairlat.errors import ContractError, DegenerateInputError, NumericOverflowError
from pairlat.models.alignment.losses import (
    contrastive_loss,
    cross_reconstruction,
    masked_similarity,
    recon_loss,
)
from pairlat.models.alignment.masks import AlignmentMask
from pairlat.models.alignment.modules import ModalityDecoder, ModalityEncoder, PerceptronArgs
from pairlat.models.recompose.backbone import task_loss


def _params(seed: int = 0) -> ParamSet:
    g = torch.Generator().manual_seed(seed)
    return ParamSet(
        {
            "w": torch.randn(3, 3, generator=g, dtype=torch.float64),
            "b": torch.randn(3, generator=g, dtype=torch.float64),
        }
    )


def _inputs(seed: int = 1, n: int = 6) -> torch.Tensor:
    g = torch.Generator().manual_seed(seed)
    return torch.randn(n, 3, generator=g, dtype=torch.float64)


def test_param_set_is_name_ordered():
    params = ParamSet([("z", torch.zeros(1)), ("a", torch.ones(2))])
    assert list(params) == ["a", "z"]
    assert params["a"].shape == (2,)


def test_param_set_rejects_duplicates():
    with pytest.raises(ContractError):
        ParamSet([("a", torch.zeros(1)), ("a", torch.ones(1))])


def test_param_set_compatibility():
    params = _params()
    params.check_compatible(params.zeros_like())

    with pytest.raises(ContractError):
        params.check_compatible(ParamSet({"w": torch.zeros(3, 3)}))
    with pytest.raises(ContractError):
        params.check_compatible(ParamSet({"w": torch.zeros(3, 3), "b": torch.zeros(4)}))


def test_adam_step_is_pure():
    params = _params()
    grads = params.map(lambda _, t: torch.full_like(t, 0.5))
    state = OptState.init(params, lr=0.1)

    before = {n: params[n].clone() for n in params}
    new_params, new_state = adam_step(state, params, grads)

    for name in params:
        assert torch.equal(params[name], before[name])
        assert torch.equal(state.exp_avg[name], torch.zeros_like(before[name]))
    assert state.step == 0
    assert new_state.step == 1

    # First bias-corrected step moves every coordinate by lr against the gradient sign
    for name in params:
        torch.testing.assert_close(new_params[name], before[name] - 0.1, atol=1e-8, rtol=0)


def test_adam_step_rejects_negative_step():
    params = _params()
    state = OptState.init(params)
    bad = OptState(state.exp_avg, state.exp_avg_sq, step=-1)
    with pytest.raises(ContractError):
        adam_step(bad, params, params.zeros_like())


def test_functional_adam_matches_torch_adam():
    target = _inputs(2, 4)
    ours = torch.zeros(4, 3, dtype=torch.float64, requires_grad=True)
    reference = torch.zeros(4, 3, dtype=torch.float64, requires_grad=True)

    opt_ours = FunctionalAdam([ours], lr=1e-2)
    opt_ref = torch.optim.Adam([reference], lr=1e-2, betas=(0.9, 0.999), eps=1e-8)

    for _ in range(5):
        for param, opt in ((ours, opt_ours), (reference, opt_ref)):
            opt.zero_grad()
            ((param - target) ** 2).sum().backward()
            opt.step()

    torch.testing.assert_close(ours, reference, rtol=1e-10, atol=1e-12)


def test_functional_adam_handles_alternating_subsets():
    targets = [_inputs(seed, 4) for seed in range(3)]

    def fresh():
        return [torch.zeros(4, 3, dtype=torch.float64, requires_grad=True) for _ in range(3)]

    ours, reference = fresh(), fresh()
    opt_ours = FunctionalAdam(ours, lr=1e-2)
    opt_ref = torch.optim.Adam(reference, lr=1e-2, betas=(0.9, 0.999), eps=1e-8)

    # Round-robin over edges leaves some tensors without a gradient on a step.
    schedule = [(0, 1), (0, 2), (1, 2), (0, 1), (0, 1, 2), (1, 2)]
    for subset in schedule:
        for params, opt in ((ours, opt_ours), (reference, opt_ref)):
            opt.zero_grad(set_to_none=True)
            sum(((params[k] - targets[k]) ** 2).sum() for k in subset).backward()
            opt.step()

    for mine, theirs in zip(ours, reference):
        torch.testing.assert_close(mine, theirs, rtol=1e-10, atol=1e-12)
    assert [opt_ours.state[p]["step"] for p in ours] == [4, 5, 4]


def test_functional_adam_rejects_bad_lr():
    with pytest.raises(ContractError):
        FunctionalAdam([torch.zeros(1, requires_grad=True)], lr=0.0)


_MASK = AlignmentMask.from_values(2, 1, [1, 0, 1])
_DECODER = ModalityDecoder(3, 3, 1, PerceptronArgs(hidden=4), seed=0, modality=1)


def _recon_program(params, x):
    return recon_loss(affine(x, params["w"], params["b"]), x, lam=0.1)


def _contrastive_program(params, x):
    z_i = leaky_relu(affine(x, params["w"], params["b"]))
    z_j = affine(x.flip(0), params["w"].T.contiguous())
    return contrastive_loss(z_i, z_j, _MASK, tau=0.2)


def _similarity_program(params, x):
    z_i = affine(x, params["w"], params["b"])
    return -masked_similarity(z_i, x.flip(0), _MASK).mean()


def _cross_reconstruction_program(params, x):
    z_c_j = affine(x, params["w"], params["b"])
    return cross_reconstruction(_DECODER, z_c_j, _MASK, x, lam=0.1)


def _task_program(params, x):
    logits = affine(x, params["w"], params["b"])[:, 0]
    return task_loss(logits, (x[:, 1] > 0).to(x.dtype))


LOSS_PROGRAMS = [
    _recon_program,
    _contrastive_program,
    _similarity_program,
    _cross_reconstruction_program,
    _task_program,
]


@pytest.mark.parametrize("program", LOSS_PROGRAMS)
def test_gradients_match_central_differences(program):
    assert grad_check(program, _params(), 1e-5, _inputs()) < 1e-5


@pytest.mark.parametrize("program", LOSS_PROGRAMS)
@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1), st.integers(min_value=2, max_value=8))
def test_loss_gradients_on_random_instances(program, seed, n):
    assert grad_check(program, _params(seed), 1e-5, _inputs(seed + 1, n)) < 1e-4


def test_value_and_grad_returns_value():
    params = _params()
    x = _inputs()
    value, grads = value_and_grad(_recon_program, params, x)

    assert value == pytest.approx(_recon_program(params, x).item())
    params.check_compatible(grads, "gradients")


def test_value_and_grad_requires_scalar():
    with pytest.raises(ContractError):
        value_and_grad(lambda p, x: affine(x, p["w"], p["b"]), _params(), _inputs())


def test_finite_guard_reports_primitive():
    with pytest.raises(NumericOverflowError) as info:
        with FiniteGuard():
            torch.exp(torch.tensor([1000.0], dtype=torch.float64))
    assert "exp" in info.value.primitive


def test_value_and_grad_raises_on_overflow():
    params = ParamSet({"w": torch.ones(2, dtype=torch.float64)})
    with pytest.raises(NumericOverflowError):
        value_and_grad(lambda p: torch.exp(p["w"] * 1000.0).sum(), params)


def test_grad_check_rejects_bad_step():
    with pytest.raises(ContractError):
        grad_check(_recon_program, _params(), 0.0, _inputs())


def test_cosine_zero_row_is_degenerate():
    a = torch.tensor([[1.0, 0.0], [0.0, 0.0]], dtype=torch.float64)
    b = torch.ones(2, 2, dtype=torch.float64)
    with pytest.raises(DegenerateInputError):
        cosine_similarity(a, b)
    with pytest.raises(DegenerateInputError):
        pairwise_cosine_similarity(b, a)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1), st.integers(min_value=2, max_value=9))
def test_pairwise_cosine_swap_is_transpose(seed, n):
    g = torch.Generator().manual_seed(seed)
    a = torch.randn(n, 4, generator=g, dtype=torch.float64)
    b = torch.randn(n, 4, generator=g, dtype=torch.float64)

    s_ab = pairwise_cosine_similarity(a, b)
    assert torch.equal(s_ab, pairwise_cosine_similarity(b, a).T)
    assert bool((s_ab.abs() <= 1 + 1e-12).all())
    torch.testing.assert_close(torch.diagonal(s_ab), cosine_similarity(a, b))


def test_leaky_relu_inverse_roundtrip():
    x = _inputs(3, 20)
    torch.testing.assert_close(leaky_relu_inverse(leaky_relu(x, 0.2), 0.2), x)


@pytest.mark.parametrize("rows, cols", [(4, 4), (6, 3), (3, 6)])
def test_orthogonal_init(rows, cols):
    w = orthogonal_init(rows, cols, seed=7)
    assert w.shape == (rows, cols)
    gram = w.T @ w if rows >= cols else w @ w.T
    torch.testing.assert_close(gram, torch.eye(min(rows, cols), dtype=torch.float64))
    assert torch.equal(w, orthogonal_init(rows, cols, seed=7))


def test_param_set_drives_a_module():
    encoder = ModalityEncoder(3, 2, 1, PerceptronArgs(hidden=4), seed=0, modality=2)
    params = ParamSet.from_module(encoder)
    x = _inputs()

    def program(p, x):
        code = torch.func.functional_call(encoder, {n: p[n] for n in p}, (x,))
        return recon_loss(code, x, lam=0.1)

    assert grad_check(program, params, 1e-5, x) < 1e-5

    shifted = params.map(lambda _, t: t + 1.0)
    shifted.load_into(encoder)
    for name, param in encoder.named_parameters():
        assert torch.equal(param, shifted[name])
