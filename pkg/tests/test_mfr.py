import pytest
import torch
import torch.nn.functional as F
from conftest import directional_fd_errors, weighted_sum

from tkc import ShapeError
from tkc.mfr import (
    DCNPack,
    MultiFrameRestorer,
    PCDAlign,
    PyramidConfig,
    RestoreHead,
    TSAFusion,
    modulated_deform_conv2d,
)

torchvision = pytest.importorskip("torchvision")


def test_zero_offset_equals_convolution():
    x = torch.randn(2, 4, 9, 11, dtype=torch.float64)
    w = torch.randn(5, 4, 3, 3, dtype=torch.float64)
    b = torch.randn(5, dtype=torch.float64)
    out = modulated_deform_conv2d(x, torch.zeros(2, 18, 9, 11, dtype=x.dtype), torch.ones(2, 9, 9, 11, dtype=x.dtype), w, b)
    assert (out - F.conv2d(x, w, b, padding=1)).abs().max() < 1e-6


@pytest.mark.parametrize("groups", [1, 2])
def test_matches_torchvision_reference(groups):
    g = torch.Generator().manual_seed(groups)
    x = torch.randn(2, 4, 7, 8, generator=g, dtype=torch.float64)
    w = torch.randn(3, 4, 3, 3, generator=g, dtype=torch.float64)
    b = torch.randn(3, generator=g, dtype=torch.float64)
    off = 2 * torch.randn(2, 18 * groups, 7, 8, generator=g, dtype=torch.float64)
    mask = torch.rand(2, 9 * groups, 7, 8, generator=g, dtype=torch.float64)
    ours = modulated_deform_conv2d(x, off, mask, w, b)
    ref = torchvision.ops.deform_conv2d(x, off, w, b, padding=1, mask=mask)
    assert (ours - ref).abs().max() < 1e-10


def test_integer_offsets_undo_a_shift():
    ref = torch.randn(1, 3, 14, 14, dtype=torch.float64)
    sup = torch.roll(ref, (1, 2), (2, 3))  # sup[i + 1, j + 2] = ref[i, j]
    w = torch.randn(2, 3, 3, 3, dtype=torch.float64)
    off = torch.zeros(1, 18, 14, 14, dtype=torch.float64)
    off[:, 0::2] = 1
    off[:, 1::2] = 2
    out = modulated_deform_conv2d(sup, off, torch.ones(1, 9, 14, 14, dtype=torch.float64), w)
    plain = F.conv2d(ref, w, padding=1)
    assert (out - plain)[..., 1:-3, 1:-4].abs().max() < 1e-10


def test_sampler_gradients_at_fractional_offsets():
    g = torch.Generator().manual_seed(0)
    x = torch.randn(1, 2, 6, 6, generator=g, dtype=torch.float64, requires_grad=True)
    w = torch.randn(2, 2, 3, 3, generator=g, dtype=torch.float64, requires_grad=True)
    whole = torch.randint(-2, 3, (1, 18, 6, 6), generator=g).double()
    frac = 0.2 + 0.6 * torch.rand(1, 18, 6, 6, generator=g, dtype=torch.float64)
    off = (whole + frac).requires_grad_()
    mask = torch.rand(1, 9, 6, 6, generator=g, dtype=torch.float64, requires_grad=True)
    errs = directional_fd_errors(lambda: weighted_sum(modulated_deform_conv2d(x, off, mask, w)), [x, off, mask, w])
    assert max(errs) < 1e-4


def test_shape_errors():
    x = torch.zeros(1, 4, 6, 6)
    with pytest.raises(ShapeError):
        modulated_deform_conv2d(x, torch.zeros(1, 17, 6, 6), torch.zeros(1, 9, 6, 6), torch.zeros(2, 4, 3, 3))
    with pytest.raises(ShapeError):
        PCDAlign(4, PyramidConfig())(x, torch.zeros(1, 4, 6, 8))


def _randomize_offsets(module, scale=0.1):
    for m in module.modules():
        if isinstance(m, DCNPack):
            with torch.no_grad():
                m.conv_offset_mask.weight.normal_(0, scale)
                m.conv_offset_mask.bias.normal_(0, scale)


@pytest.mark.parametrize("cascade", [False, True])
def test_alignment_gradients(cascade):
    align = PCDAlign(4, PyramidConfig(levels=2, cascade=cascade)).double()
    _randomize_offsets(align)
    ref = torch.randn(1, 4, 8, 8, dtype=torch.float64)
    sup = torch.randn(1, 4, 8, 8, dtype=torch.float64, requires_grad=True)
    errs = directional_fd_errors(lambda: weighted_sum(align(ref, sup)), list(align.parameters()) + [sup])
    assert max(errs) < 1e-4


def test_alignment_zero_offsets_is_plain_convolution(monkeypatch):
    align = PCDAlign(4, PyramidConfig(levels=3, cascade=True))
    ref = torch.randn(2, 4, 16, 16)
    sup = torch.randn(2, 4, 16, 16)
    out = align(ref, sup)

    def plain(self, x, offset_feat):
        mask = torch.sigmoid(self.conv_offset_mask.bias[2 * self.groups * self.taps:]).view(1, -1, 1, 1)
        assert torch.all(mask == 0.5)
        return 0.5 * F.conv2d(x, self.dcn.weight, padding=self.dcn.padding) + self.dcn.bias.view(1, -1, 1, 1)

    monkeypatch.setattr(DCNPack, "forward", plain)
    assert (align(ref, sup) - out).abs().max() < 1e-6
    assert out.shape == ref.shape


def test_fusion_gradients():
    tsa = TSAFusion(4, 3).double()
    x = torch.randn(1, 3, 4, 8, 8, dtype=torch.float64, requires_grad=True)
    errs = directional_fd_errors(lambda: weighted_sum(tsa(x)), list(tsa.parameters()) + [x])
    assert max(errs) < 1e-4


def test_fusion_single_frame():
    tsa = TSAFusion(4, 1, out_channels=6)
    x = torch.randn(2, 1, 4, 8, 8)
    out = tsa(x)
    assert out.shape == (2, 6, 8, 8)
    att = tsa.temporal_attention(x)
    expect = torch.sigmoid((tsa.emb(x[:, 0]) * tsa.emb_ref(x[:, 0])).sum(1, keepdim=True))
    assert torch.allclose(att[:, 0], expect, atol=1e-6)
    with pytest.raises(ShapeError):
        tsa(torch.randn(2, 3, 4, 8, 8))


def test_identical_frames_share_attention():
    tsa = TSAFusion(4, 5)
    x = torch.randn(1, 1, 4, 8, 8).expand(1, 5, 4, 8, 8).contiguous()
    att = tsa.temporal_attention(x)
    assert torch.allclose(att, att[:, :1].expand_as(att), atol=1e-6)


def test_fusion_has_no_dead_parameters():
    tsa = TSAFusion(4, 3)
    x = torch.randn(2, 3, 4, 8, 8)
    opt = torch.optim.Adam(tsa.parameters(), 1e-3)
    for _ in range(2):
        opt.zero_grad()
        tsa(x).abs().mean().backward()
        opt.step()
    assert all(p.grad.abs().sum() > 0 for p in tsa.parameters())


def test_zero_init_head_is_bilinear_upsampling():
    head = RestoreHead(8, 2, 4, zero_init=True)
    y = torch.rand(2, 3, 6, 7)
    out = head(torch.randn(2, 8, 6, 7), y)
    assert torch.equal(out, F.interpolate(y, scale_factor=4, mode="bilinear", align_corners=False))


def test_multi_frame_restorer_contract():
    mfr = MultiFrameRestorer(8, 3, 2, PyramidConfig(levels=2, restore_blocks=1), zero_init=True)
    y = torch.rand(1, 3, 8, 8)
    out = mfr(torch.randn(1, 3, 8, 8, 8), y)
    assert torch.equal(out, F.interpolate(y, scale_factor=2, mode="bilinear", align_corners=False))
    with pytest.raises(ShapeError):
        mfr(torch.randn(1, 5, 8, 8, 8), y)
