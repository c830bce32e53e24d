import numpy as np
import pytest
from PIL import Image

from srpac.images import ImageInputError, read_gray8, to_display, write_gray8, write_heatmap


@pytest.mark.parametrize("suffix", [".pgm", ".png"])
def test_gray8_roundtrip(tmp_path, suffix):
    px = (np.arange(64 * 64) % 256).reshape(64, 64).astype(np.uint8)
    path = tmp_path / f"img{suffix}"
    write_gray8(path, px)
    assert np.array_equal(read_gray8(path), px)


def test_ascii_pgm_is_read(tmp_path):
    path = tmp_path / "p2.pgm"
    path.write_text("P2\n2 2\n255\n0 10\n20 255\n")
    assert read_gray8(path).tolist() == [[0, 10], [20, 255]]


def test_sixteen_bit_rejected(tmp_path):
    path = tmp_path / "deep.png"
    Image.fromarray(np.full((4, 4), 1000, np.uint16)).save(path)
    with pytest.raises(ImageInputError):
        read_gray8(path)


def test_unreadable_file(tmp_path):
    bad = tmp_path / "x.pgm"
    bad.write_bytes(b"not an image")
    with pytest.raises(ImageInputError):
        read_gray8(bad)


def test_to_display_handles_nan():
    out = to_display(np.array([[0.0, np.nan], [1.0, 0.5]]))
    assert out.tolist() == [[0, 0], [255, 128]]


def test_heatmap_files(tmp_path):
    m = np.random.default_rng(0).random((16, 16))
    paths = write_heatmap(tmp_path / "h", m)
    assert [p.suffix for p in paths] == [".pgm", ".png"]
    assert read_gray8(paths[0]).shape == (16, 16)
    with Image.open(paths[1]) as im:
        assert im.mode == "RGB"
