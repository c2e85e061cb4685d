import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage

from ifseg.autodiff import Rng
from ifseg.data import (
    LABEL_PRESETS,
    PhantomSpec,
    SliceItem,
    Volume,
    VolumeFormatError,
    class_means,
    gen_phantom,
    load_labeled_volume,
    load_volume,
    one_hot,
    pad_or_crop,
    phantom_items,
    read_analyze,
    read_analyze_header,
    read_pgm,
    read_raw16,
    remap_labels,
    restore_array,
    fit_array,
    slice_volume,
    train_val_split,
    write_analyze,
    write_pgm,
    write_raw16,
)


def items(n):
    return [SliceItem(np.zeros((2, 2)), np.zeros((2, 2), dtype=int), "s", i) for i in range(n)]


# ---------------------------------------------------------------- raw16 / analyze


def test_raw16_round_trip(tmp_path):
    vol = np.array([[[0, 1], [256, 65535]], [[4660, 2], [3, 40000]]])
    path = tmp_path / "v.raw"
    # independent writer: pack big-endian shorts by hand, W fastest
    path.write_bytes(struct.pack(">8H", *vol.ravel().tolist()))
    np.testing.assert_array_equal(read_raw16(path, (2, 2, 2)), vol)
    write_raw16(tmp_path / "w.raw", vol)
    assert (tmp_path / "w.raw").read_bytes() == path.read_bytes()
    assert load_volume(path, "raw16", (2, 2, 2)).dtype == np.float64


def test_raw16_size_mismatch(tmp_path):
    path = tmp_path / "v.raw"
    path.write_bytes(b"\x00" * 15)
    with pytest.raises(VolumeFormatError, match="15 bytes"):
        read_raw16(path, (2, 2, 2))
    with pytest.raises(ValueError, match="dims"):
        load_volume(path, "raw16")


@pytest.mark.parametrize("order", ["<", ">"])
@pytest.mark.parametrize("datatype", [2, 4, 8, 16])
def test_analyze_round_trip(tmp_path, order, datatype):
    vol = np.arange(2 * 3 * 4).reshape(2, 3, 4)
    write_analyze(tmp_path / "a", vol, byte_order=order, datatype=datatype)
    hdr = read_analyze_header(tmp_path / "a.hdr")
    assert hdr["byte_order"] == order
    assert hdr["dims"] == [4, 3, 2]
    np.testing.assert_array_equal(read_analyze(tmp_path / "a.img"), vol)


def test_analyze_byte_order_detection(tmp_path):
    write_analyze(tmp_path / "b", np.ones((1, 2, 2)), byte_order=">")
    raw = (tmp_path / "b.hdr").read_bytes()
    # the size field read with the native little-endian assumption
    assert struct.unpack("<i", raw[:4])[0] == 1_543_569_408
    assert read_analyze_header(tmp_path / "b.hdr")["byte_order"] == ">"


def test_analyze_independent_header(tmp_path):
    # hand-built big-endian signed-short header, dims x=2 y=1 z=1
    hdr = bytearray(348)
    struct.pack_into(">i", hdr, 0, 348)
    struct.pack_into(">8h", hdr, 40, 3, 2, 1, 1, 1, 0, 0, 0)
    struct.pack_into(">2h", hdr, 70, 4, 16)
    (tmp_path / "c.hdr").write_bytes(bytes(hdr))
    (tmp_path / "c.img").write_bytes(struct.pack(">2h", -5, 300))
    np.testing.assert_array_equal(read_analyze(tmp_path / "c"), [[[-5, 300]]])


def test_analyze_unsupported_datatype(tmp_path):
    write_analyze(tmp_path / "d", np.ones((1, 2, 2)))
    raw = bytearray((tmp_path / "d.hdr").read_bytes())
    struct.pack_into("<h", raw, 70, 64)
    (tmp_path / "d.hdr").write_bytes(bytes(raw))
    with pytest.raises(VolumeFormatError, match="datatype code 64"):
        read_analyze(tmp_path / "d")


def test_analyze_truncated_image(tmp_path):
    write_analyze(tmp_path / "e", np.ones((2, 2, 2)))
    data = (tmp_path / "e.img").read_bytes()
    (tmp_path / "e.img").write_bytes(data[:-1])
    with pytest.raises(VolumeFormatError, match="bytes on disk"):
        read_analyze(tmp_path / "e")


def test_analyze_bad_header_size(tmp_path):
    (tmp_path / "f.hdr").write_bytes(b"\x01" * 348)
    with pytest.raises(VolumeFormatError, match="expected 348"):
        read_analyze_header(tmp_path / "f.hdr")


def test_pgm_round_trip(tmp_path):
    img = np.arange(12, dtype=np.uint8).reshape(3, 4)
    write_pgm(tmp_path / "p.pgm", img, maxval=11)
    assert (tmp_path / "p.pgm").read_bytes().startswith(b"P5\n4 3\n11\n")
    np.testing.assert_array_equal(read_pgm(tmp_path / "p.pgm"), img)
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "q.pgm", img, maxval=5)


def test_labeled_volume_remaps(tmp_path):
    img = np.arange(8).reshape(2, 2, 2)
    lab = np.array([0, 128, 192, 254, 0, 0, 128, 254]).reshape(2, 2, 2)
    write_analyze(tmp_path / "img", img)
    write_analyze(tmp_path / "lab", lab)
    vol = load_labeled_volume(tmp_path / "img", tmp_path / "lab", "s1", mapping=LABEL_PRESETS["ibsr8bit"])
    np.testing.assert_array_equal(vol.labels.ravel(), [0, 1, 2, 3, 0, 0, 1, 3])
    assert vol.dims == (2, 2, 2)


# ---------------------------------------------------------------- labels, slicing, fitting


def test_remap_presets():
    m = np.array([[0, 1], [2, 3]])
    np.testing.assert_array_equal(remap_labels(m, LABEL_PRESETS["ibsr"]), m)
    np.testing.assert_array_equal(remap_labels(np.array([[0, 128], [192, 254]]), LABEL_PRESETS["ibsr8bit"]), m)


def test_remap_unmapped_label():
    with pytest.raises(ValueError, match="unmapped label 7"):
        remap_labels(np.array([0, 7, 1]), LABEL_PRESETS["ibsr"])


def test_volume_dims_must_match():
    with pytest.raises(VolumeFormatError):
        Volume(np.zeros((2, 2, 2)), np.zeros((2, 2, 3), dtype=int), "x")


def test_slice_volume_counts():
    vol = Volume(np.random.default_rng(0).uniform(size=(4, 8, 8)), np.ones((4, 8, 8), dtype=int), "s")
    slices = slice_volume(vol, 0)
    assert len(slices) == 4 and all(s.image.shape == (8, 8) for s in slices)
    assert [s.slice_index for s in slices] == [0, 1, 2, 3]
    np.testing.assert_array_equal(slices[2].image, vol.intensities[2])
    vol.labels[1] = 0
    assert len(slice_volume(vol, 0, keep_empty=False)) == 3
    assert slice_volume(vol, 2)[0].image.shape == (4, 8)


def test_ibsr_slice_and_split_counts():
    vol = Volume(np.zeros((256, 2, 2)), np.zeros((256, 2, 2), dtype=int), "s")
    all_items = [it for _ in range(10) for it in slice_volume(vol, 0)]
    assert len(all_items) == 2_560
    ds = train_val_split(all_items, 0.8, seed=1)
    assert len(ds.indices("train")) == 2_048 and len(ds.indices("val")) == 512


def test_split_small_and_deterministic():
    ds = train_val_split(items(10), 0.8, seed=3)
    assert len(ds.partition("train")) == 8 and len(ds.partition("val")) == 2
    assert ds.split == train_val_split(items(10), 0.8, seed=3).split
    assert len({tuple(train_val_split(items(10), 0.8, seed=k).split) for k in range(5)}) > 1
    with pytest.raises(ValueError, match="at least 2"):
        train_val_split(items(1), 0.8)


@given(n=st.integers(2, 300), ratio=st.floats(0.05, 0.95), seed=st.integers(0, 2**32 - 1))
def test_split_properties(n, ratio, seed):
    ds = train_val_split(items(n), ratio, seed)
    train, val = set(ds.indices("train")), set(ds.indices("val"))
    assert not train & val and len(train) + len(val) == n
    assert abs(len(train) - ratio * n) <= 1
    assert train and val


def test_pad_or_crop_examples():
    img = np.ones((256, 128))
    out, mask = pad_or_crop(img, np.ones((256, 128), dtype=int), (256, 256))
    assert out.shape == (256, 256)
    assert np.all(out[:, :64] == 0) and np.all(out[:, -64:] == 0) and np.all(out[:, 64:192] == 1)
    assert np.all(mask[:, :64] == 0)
    same = np.arange(16.0).reshape(4, 4)
    np.testing.assert_array_equal(pad_or_crop(same, same, (4, 4))[0], same)
    big = np.arange(260 * 260).reshape(260, 260)
    np.testing.assert_array_equal(pad_or_crop(big, big, (256, 256))[0], big[2:258, 2:258])


@given(h=st.integers(1, 40), w=st.integers(1, 40), th=st.integers(1, 40), tw=st.integers(1, 40))
def test_fit_restore_round_trip(h, w, th, tw):
    a = np.arange(h * w).reshape(h, w) + 1
    back = restore_array(fit_array(a, (th, tw)), (h, w))
    # whatever survived the crop comes back in place; the rest is fill
    kept = back != 0
    np.testing.assert_array_equal(back[kept], a[kept])
    assert kept.sum() == min(h, th) * min(w, tw)


def test_pipeline_preserves_class_counts():
    mask = Rng(0).integers(0, 4, (30, 22))
    _, fitted = pad_or_crop(np.zeros(mask.shape), mask, (32, 32))
    oh = one_hot(fitted, 4)
    before = np.bincount(mask.ravel(), minlength=4)
    after = oh.sum(axis=(1, 2))
    np.testing.assert_array_equal(after[1:], before[1:])
    assert after[0] == before[0] + (32 * 32 - 30 * 22)


def test_one_hot_examples():
    m = np.array([[0, 1], [2, 3]])
    oh = one_hot(m, 4)
    assert oh.shape == (4, 2, 2)
    assert all(oh[c].sum() == 1 for c in range(4))
    np.testing.assert_array_equal(oh.sum(axis=0), 1)
    np.testing.assert_array_equal(oh.argmax(axis=0), m)
    assert one_hot(np.stack([m, m]), 4).shape == (2, 4, 2, 2)
    with pytest.raises(ValueError):
        one_hot(np.array([[4]]), 4)


# ---------------------------------------------------------------- phantoms


def test_phantom_degenerate_spec_is_piecewise_constant():
    spec = PhantomSpec(size=(48, 48), blur_width=0, noise_sigma=0, seed=2)
    image, mask = gen_phantom(spec)
    means = class_means(4)
    np.testing.assert_array_equal(image, means[mask])
    # thresholding halfway between means recovers the mask
    recovered = np.digitize(image, (means[:-1] + means[1:]) / 2)
    np.testing.assert_array_equal(recovered, mask)


def test_phantom_is_deterministic():
    spec = PhantomSpec(blur_width=2, noise_sigma=4, seed=9)
    a = gen_phantom(spec, Rng(9, "p"))
    b = gen_phantom(spec, Rng(9, "p"))
    assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()
    assert not np.array_equal(a[0], gen_phantom(spec, Rng(10, "p"))[0])


@pytest.mark.parametrize("regions", [2, 3, 4])
def test_phantom_every_class_present(regions):
    for it in phantom_items(6, PhantomSpec(size=(32, 32), num_regions=regions, seed=4)):
        assert np.all(np.bincount(it.mask.ravel(), minlength=regions) > 0)
        assert it.mask.max() == regions - 1


def test_phantom_spec_validation():
    with pytest.raises(ValueError, match="<= 4"):
        PhantomSpec(num_regions=5)
    with pytest.raises(ValueError):
        PhantomSpec(num_regions=1)


def test_blur_mixing_is_concentrated_at_boundaries():
    spec = PhantomSpec(size=(64, 64), blur_width=2, noise_sigma=0, seed=5)
    image, mask = gen_phantom(spec)
    mixed = ~np.isin(image, class_means(4))
    assert mixed.mean() > 0
    # chessboard distance from each pixel to the nearest pixel of another class
    dist = np.full(mask.shape, np.inf)
    for c in range(4):
        inside = mask == c
        d = ndimage.distance_transform_cdt(inside, metric="chessboard")
        dist[inside] = d[inside]
    assert np.all(dist[mixed] <= 2)
    assert np.all(mixed[dist <= 1])
