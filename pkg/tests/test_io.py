import json
import math

import numpy as np
import pytest

from dsnmf import io
from dsnmf.deep import DeepModel, Nonlinearity
from dsnmf.errors import CorruptArchiveError, InvalidInputError, ParseError, UnsupportedVersionError
from dsnmf.graphreg import AttributeLabels


def small_model(rng, g=None):
    Z = [rng.standard_normal((6, 4)), rng.standard_normal((4, 3))]
    H = [rng.uniform(size=(4, 9)), rng.uniform(size=(3, 9))]
    return DeepModel(Z, H, g or Nonlinearity("identity"))


# --------------------------------------------------------------------------
# matrices


def test_csv_hand_case(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text("1,2\n3,4")
    np.testing.assert_array_equal(io.load_matrix(f), [[1.0, 2.0], [3.0, 4.0]])


@pytest.mark.parametrize("name", ["m.f64bin", "m.csv"])
def test_matrix_roundtrip_bitwise(tmp_path, rng, name):
    A = rng.standard_normal((5, 7)) * 10.0 ** rng.integers(-300, 300, (5, 7))
    io.save_matrix(A, tmp_path / name)
    B = io.load_matrix(tmp_path / name)
    assert B.tobytes() == A.tobytes()


def test_f64bin_layout(rng):
    A = np.array([[1.0, 2.0, 3.0]])
    raw = io.matrix_to_bytes(A)
    assert raw[:4] == b"DMF1"
    assert int.from_bytes(raw[4:12], "little") == 1 and int.from_bytes(raw[12:20], "little") == 3
    assert raw[20:] == np.array([1.0, 2.0, 3.0], dtype="<f8").tobytes()


def test_truncated_f64bin(tmp_path, rng):
    f = tmp_path / "t.f64bin"
    io.save_matrix(rng.standard_normal((3, 4)), f)
    f.write_bytes(f.read_bytes()[:-5])
    with pytest.raises(ParseError, match=r"expected 116 bytes.*got 111"):
        io.load_matrix(f)


def test_bad_magic(tmp_path):
    f = tmp_path / "x.f64bin"
    f.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(ParseError, match="magic"):
        io.load_matrix(f)


def test_csv_errors(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("1,2\n3,x\n")
    with pytest.raises(ParseError, match="line 2"):
        io.load_matrix(f)
    f.write_text("1,2\n3\n")
    with pytest.raises(ParseError, match="line 2"):
        io.load_matrix(f)
    f.write_text("1,nan\n")
    with pytest.raises(InvalidInputError):
        io.load_matrix(f)
    with pytest.raises(InvalidInputError):
        io.load_matrix(tmp_path / "missing.csv")


def test_nonfinite_f64bin(tmp_path):
    f = tmp_path / "n.f64bin"
    io.save_matrix(np.array([[1.0, np.inf]]), f)
    with pytest.raises(InvalidInputError):
        io.load_matrix(f)


def test_atomic_write_leaves_no_temp(tmp_path):
    io.atomic_write_text(tmp_path / "f.txt", "hello")
    io.atomic_write_text(tmp_path / "f.txt", "again")
    assert (tmp_path / "f.txt").read_text() == "again"
    assert [p.name for p in tmp_path.iterdir()] == ["f.txt"]


# --------------------------------------------------------------------------
# labels and metrics


def test_labels_roundtrip(tmp_path):
    attrs = [AttributeLabels([0, 1, -1, 1], "pose"), AttributeLabels([2, -1, 0, 0], "identity")]
    io.save_labels(tmp_path / "l.csv", attrs, names=["a", "b", "c", "d"])
    names, out = io.load_labels(tmp_path / "l.csv")
    assert names == ["a", "b", "c", "d"]
    np.testing.assert_array_equal(out["pose"].labels, [0, 1, -1, 1])
    np.testing.assert_array_equal(out["identity"].labels, [2, -1, 0, 0])


def test_labels_string_values(tmp_path):
    f = tmp_path / "l.csv"
    f.write_text("file,person\nx.pgm,bob\ny.pgm,\nz.pgm,alice\n")
    _, out = io.load_labels(f)
    np.testing.assert_array_equal(out["person"].labels, [1, -1, 0])
    f.write_text("file,person\nx.pgm\n")
    with pytest.raises(ParseError):
        io.load_labels(f)


def test_metric_rows_roundtrip(tmp_path):
    rows = [dict(method="seminmf", layer=1, attribute="pose", metric="ac", value=0.1 + 0.2, seed=3)]
    text = io.format_metric_rows(rows)
    assert text.splitlines()[0] == "method,layer,attribute,metric,value,seed"
    io.write_metrics(tmp_path / "m.csv", rows)
    back = io.read_metrics(tmp_path / "m.csv")
    assert back[0]["value"] == 0.1 + 0.2 and back[0]["method"] == "seminmf"


def test_exponential_grid():
    assert io.exponential_grid(4, 64, 5) == [4, 8, 16, 32, 64]
    assert io.exponential_grid(3, 3, 4) == [3]
    with pytest.raises(InvalidInputError):
        io.exponential_grid(5, 2, 3)


# --------------------------------------------------------------------------
# images and IGO


def naive_igo(img):
    h, w = img.shape

    def d(a, i, n):
        if i == 0:
            return a(1) - a(0)
        if i == n - 1:
            return a(n - 1) - a(n - 2)
        return (a(i + 1) - a(i - 1)) / 2.0

    cos, sin = [], []
    for r in range(h):
        for c in range(w):
            gx = d(lambda j: img[r, j], c, w)
            gy = d(lambda i: img[i, c], r, h)
            phi = math.atan2(gy, gx)
            cos.append(math.cos(phi))
            sin.append(math.sin(phi))
    return np.array(cos + sin)


def test_igo_constant_image():
    F = io.extract_igo(np.full((2, 5, 4), 0.3))
    assert F.shape == (40, 2)
    np.testing.assert_array_equal(F[:20], 1.0)
    np.testing.assert_array_equal(F[20:], 0.0)


def test_igo_matches_naive(rng):
    imgs = rng.uniform(size=(3, 5, 6))
    F = io.extract_igo(imgs)
    for j in range(3):
        np.testing.assert_allclose(F[:, j], naive_igo(imgs[j]), atol=1e-12)


@pytest.mark.parametrize("h,w,dim", [(32, 32, 2048), (42, 30, 2520)])
def test_igo_dimensions_and_norms(rng, h, w, dim):
    F = io.extract_igo(rng.uniform(size=(4, h, w)))
    assert F.shape == (dim, 4)
    np.testing.assert_allclose(np.sum(F * F, axis=0), h * w, atol=1e-9)
    assert F.min() < 0


def test_igo_errors():
    with pytest.raises(InvalidInputError):
        io.extract_igo(np.zeros((2, 1, 5)))
    with pytest.raises(InvalidInputError):
        io.extract_igo(np.full((1, 3, 3), 1.5))


def test_pgm_roundtrip_and_dir(tmp_path, rng):
    imgs = np.rint(rng.uniform(size=(3, 4, 5)) * 255) / 255
    for i, im in enumerate(imgs):
        io.write_pgm(tmp_path / f"img{2 - i}.pgm", im)
    names, stack = io.load_image_dir(tmp_path)
    assert names == ["img0.pgm", "img1.pgm", "img2.pgm"]
    np.testing.assert_allclose(stack, imgs[::-1], atol=1e-15)


def test_pgm_comments_and_16bit(tmp_path):
    f = tmp_path / "c.pgm"
    f.write_bytes(b"P5\n# made by hand\n2 1\n65535\n" + np.array([0, 65535], dtype=">u2").tobytes())
    np.testing.assert_array_equal(io.read_pgm(f), [[0.0, 1.0]])
    f.write_bytes(b"P2\n2 1\n255\n0 1\n")
    with pytest.raises(ParseError):
        io.read_pgm(f)
    f.write_bytes(b"P5\n4 4\n255\n" + bytes(3))
    with pytest.raises(ParseError, match="expected 16"):
        io.read_pgm(f)


def test_image_dir_mixed_sizes(tmp_path):
    io.write_pgm(tmp_path / "a.pgm", np.zeros((2, 2)))
    io.write_pgm(tmp_path / "b.pgm", np.zeros((3, 2)))
    with pytest.raises(InvalidInputError):
        io.load_image_dir(tmp_path)


# --------------------------------------------------------------------------
# model archives


@pytest.mark.parametrize("g", [Nonlinearity("identity"), Nonlinearity("stanh", 1.7, 0.6), Nonlinearity("square")])
def test_model_roundtrip_bitwise(tmp_path, rng, g):
    model = small_model(rng, g)
    io.save_model(model, tmp_path / "m", config={"seed": 3}, objective_trace=[3.0, 2.0])
    back, manifest = io.load_model(tmp_path / "m")
    for a, b in zip(model.Z + model.H, back.Z + back.H):
        assert a.tobytes() == b.tobytes()
    assert back.g.to_dict() == g.to_dict()
    assert manifest["layer_sizes"] == [4, 3] and manifest["objective_trace"] == [3.0, 2.0]


def test_save_is_byte_identical(tmp_path, rng):
    model = small_model(rng)
    io.save_model(model, tmp_path / "a", config={"x": 1})
    io.save_model(model, tmp_path / "b", config={"x": 1})
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def _edit_manifest(d, **changes):
    path = d / "manifest.json"
    man = json.loads(path.read_text())
    man.update(changes)
    path.write_text(json.dumps(man))


def test_manifest_wrong_shape(tmp_path, rng):
    io.save_model(small_model(rng), tmp_path)
    _edit_manifest(tmp_path, layer_sizes=[5, 3])
    with pytest.raises(CorruptArchiveError):
        io.load_model(tmp_path)


def test_missing_factor_named(tmp_path, rng):
    io.save_model(small_model(rng), tmp_path)
    (tmp_path / "H2.f64bin").unlink()
    with pytest.raises(CorruptArchiveError, match="H2.f64bin"):
        io.load_model(tmp_path)


def test_version_mismatch(tmp_path, rng):
    io.save_model(small_model(rng), tmp_path)
    _edit_manifest(tmp_path, format_version=99)
    with pytest.raises(UnsupportedVersionError):
        io.load_model(tmp_path)


def test_missing_manifest(tmp_path):
    with pytest.raises(CorruptArchiveError):
        io.load_model(tmp_path)


def test_corrupt_factor_bytes(tmp_path, rng):
    io.save_model(small_model(rng), tmp_path)
    f = tmp_path / "Z1.f64bin"
    f.write_bytes(f.read_bytes()[:30])
    with pytest.raises(CorruptArchiveError):
        io.load_model(tmp_path)
