import numpy as np
import pytest
import torch

from meshdrape.neural import (EncoderState, EncodingBasis, Network, backward,
                              encode, forward, make_optimizer, optimizer_step,
                              schedule_mask)


def test_encoder_width():
    assert EncoderState().width == 39
    assert EncoderState(mode="none").width == 3


def test_schedule_start():
    enc = EncoderState()
    m = schedule_mask(enc, 0)
    assert np.allclose(m, 0.0)
    # block 0 ramps to 1 at reveal_iters / blocks
    assert np.isclose(schedule_mask(enc, 1000 / 6)[0], 1.0)
    assert schedule_mask(enc, 50)[0] > 0.0


def test_schedule_full_reveal():
    enc = EncoderState()
    assert np.allclose(schedule_mask(enc, 1000), 1.0)
    assert np.allclose(schedule_mask(enc, 5000), 1.0)


def test_schedule_midpoint():
    enc = EncoderState()
    m = schedule_mask(enc, 500)
    assert np.allclose(m[:3], 1.0)
    assert np.isclose(m[3], 0.0)      # block 3 starts ramping exactly at 500
    assert np.allclose(m[4:], 0.0)
    assert schedule_mask(enc, 501)[3] > 0.0


def test_mask_monotonicity():
    enc = EncoderState(reveal_iters=700)
    ts = np.linspace(0, 900, 41)
    prev = None
    for t in ts:
        m = schedule_mask(enc, t)
        assert (np.diff(m) <= 1e-12).all()          # lower blocks lead
        if prev is not None:
            assert (m >= prev - 1e-12).all()        # non-decreasing in t
        prev = m


def test_static_mode_fully_on():
    assert np.allclose(schedule_mask(EncoderState(mode="static"), 0), 1.0)
    # progressive with reveal 0 is the same thing
    assert np.allclose(schedule_mask(EncoderState(reveal_iters=0), 0), 1.0)


def test_encode_origin():
    enc = EncoderState()
    f = encode(np.zeros((1, 3)), enc, 2000).numpy()[0]
    assert np.allclose(f[:3], 0.0)
    sins = f[3:].reshape(6, 2, 3)[:, 0, :]
    coss = f[3:].reshape(6, 2, 3)[:, 1, :]
    assert np.allclose(sins, 0.0)
    assert np.allclose(coss, 1.0)


def test_encode_blocked_at_t0():
    enc = EncoderState()
    f = encode(np.full((1, 3), 0.37), enc, 0).numpy()[0]
    assert np.allclose(f[3:], 0.0)   # every block masked at t=0


def test_encode_first_block_value():
    enc = EncoderState()
    f = encode(np.array([[0.5, 0, 0]]), enc, 2000).numpy()[0]
    assert np.isclose(f[3], np.sin(np.pi * 0.5))
    assert np.isclose(f[3], 1.0)


def test_encoding_basis_matches_encode():
    enc = EncoderState()
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(10, 3))
    basis = EncodingBasis(pts, enc)
    for t in (0, 123, 500, 1000):
        assert torch.allclose(basis.features(t), encode(pts, enc, t))


def test_none_mode_features_are_raw():
    pts = np.random.default_rng(1).normal(size=(5, 3))
    enc = EncoderState(mode="none")
    assert np.allclose(encode(pts, enc, 77).numpy(), pts)


# -- network -----------------------------------------------------------------

def test_zero_init_output():
    net = Network(39, seed=0)
    f = encode(np.random.default_rng(2).normal(size=(7, 3)), EncoderState(), 400)
    out = forward(net, f)
    assert torch.allclose(out, torch.zeros(7, 3, dtype=torch.float64))


def test_all_zero_hidden_gives_bias():
    net = Network(3, width=8, hidden_layers=2, seed=0)
    with torch.no_grad():
        for lin in [l for l in net.stack if isinstance(l, torch.nn.Linear)]:
            lin.weight.zero_()
            lin.bias.zero_()
        net.stack[-1].bias.fill_(0.25)
    out = net(torch.zeros(4, 3, dtype=torch.float64))
    assert torch.allclose(out, torch.full((4, 3), 0.25, dtype=torch.float64))


def test_forward_matches_hand_computation():
    # 2-unit single hidden layer, hand-set weights
    net = Network(3, width=2, hidden_layers=1, seed=0)
    with torch.no_grad():
        net.stack[0].weight.copy_(torch.tensor([[1.0, 0, 0], [0, -1.0, 0]],
                                               dtype=torch.float64))
        net.stack[0].bias.copy_(torch.tensor([0.5, 0.0], dtype=torch.float64))
        net.stack[-1].weight.copy_(torch.tensor([[2.0, 1.0], [0, 0], [1.0, -1.0]],
                                                dtype=torch.float64))
        net.stack[-1].bias.copy_(torch.tensor([0.0, 3.0, 0.0], dtype=torch.float64))
    x = torch.tensor([[0.2, 0.4, 9.0]], dtype=torch.float64)
    h = np.maximum([0.2 + 0.5, -0.4], 0)           # relu([0.7, -0.4])
    expect = [2 * h[0] + 1 * h[1], 3.0, h[0] - h[1]]
    assert np.allclose(net(x).detach().numpy()[0], expect)


def test_backward_zero_upstream():
    net = Network(3, width=4, hidden_layers=1, seed=1)
    x = torch.randn(5, 3, dtype=torch.float64)
    grads = backward(net, x, torch.zeros(5, 3, dtype=torch.float64))
    assert all(torch.allclose(g, torch.zeros_like(g)) for g in grads)


def test_backward_matches_finite_differences():
    torch.manual_seed(3)
    net = Network(9, width=6, hidden_layers=2, seed=3)
    with torch.no_grad():  # non-zero output layer so gradients flow everywhere
        net.stack[-1].weight.normal_(0, 0.3, generator=torch.Generator().manual_seed(4))
    x = torch.randn(20, 9, dtype=torch.float64)
    up = torch.randn(20, 3, dtype=torch.float64)
    grads = backward(net, x, up)
    h = 1e-4
    for p, g in zip(net.parameters(), grads):
        flat = p.detach().reshape(-1)
        gflat = g.reshape(-1)
        idx = np.random.default_rng(0).choice(len(flat), size=min(10, len(flat)),
                                              replace=False)
        for i in idx:
            orig = flat[i].item()
            with torch.no_grad():
                flat[i] = orig + h
                lp = (net(x) * up).sum().item()
                flat[i] = orig - h
                lm = (net(x) * up).sum().item()
                flat[i] = orig
            fd = (lp - lm) / (2 * h)
            denom = max(abs(fd), abs(gflat[i].item()), 1e-8)
            assert abs(fd - gflat[i].item()) / denom < 1e-4


def test_relu_inactive_unit_zero_gradient():
    net = Network(3, width=2, hidden_layers=1, seed=5)
    with torch.no_grad():
        net.stack[0].weight.copy_(torch.tensor([[1.0, 0, 0], [1.0, 0, 0]],
                                               dtype=torch.float64))
        net.stack[0].bias.copy_(torch.tensor([0.0, -10.0], dtype=torch.float64))
        net.stack[-1].weight.fill_(1.0)
    x = torch.ones(4, 3, dtype=torch.float64)
    grads = backward(net, x, torch.ones(4, 3, dtype=torch.float64))
    w_grad = grads[0]       # first layer weight: unit 1 is always inactive
    assert torch.allclose(w_grad[1], torch.zeros(3, dtype=torch.float64))
    assert not torch.allclose(w_grad[0], torch.zeros(3, dtype=torch.float64))


# -- optimizer ---------------------------------------------------------------

def test_optimizer_zero_gradient_no_motion():
    net = Network(3, width=4, hidden_layers=1, seed=6)
    opt = make_optimizer(net)
    before = [p.detach().clone() for p in net.parameters()]
    optimizer_step(opt, [torch.zeros_like(p) for p in net.parameters()])
    for b, p in zip(before, net.parameters()):
        assert torch.equal(b, p.detach())
    assert opt.state[next(iter(net.parameters()))]["step"].item() == 1


def test_optimizer_first_step_magnitude():
    net = Network(3, width=4, hidden_layers=1, seed=7)
    lr = 5e-4
    opt = make_optimizer(net, lr=lr)
    before = [p.detach().clone() for p in net.parameters()]
    optimizer_step(opt, [torch.full_like(p, 2.5) for p in net.parameters()])
    for b, p in zip(before, net.parameters()):
        delta = (b - p.detach()).abs()
        # bias-corrected first step is lr * g/|g| regardless of magnitude
        assert torch.allclose(delta, torch.full_like(delta, lr), rtol=1e-4)


def test_optimizer_deterministic():
    def trajectory():
        torch.manual_seed(11)
        net = Network(3, width=4, hidden_layers=1, seed=11)
        with torch.no_grad():
            net.stack[-1].weight.fill_(0.1)
        opt = make_optimizer(net)
        x = torch.randn(6, 3, dtype=torch.float64,
                        generator=torch.Generator().manual_seed(12))
        vals = []
        for _ in range(5):
            opt.zero_grad()
            loss = (net(x) ** 2).sum()
            loss.backward()
            opt.step()
            vals.append(loss.item())
        return vals, [p.detach().clone() for p in net.parameters()]

    v1, p1 = trajectory()
    v2, p2 = trajectory()
    assert v1 == v2
    assert all(torch.equal(a, b) for a, b in zip(p1, p2))


def test_optimizer_rejects_non_finite():
    net = Network(3, width=4, hidden_layers=1, seed=8)
    opt = make_optimizer(net)
    bad = [torch.full_like(p, np.nan) for p in net.parameters()]
    with pytest.raises(ValueError):
        optimizer_step(opt, bad)
