import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from badfusion.errors import (
    MissingArtifact,
    MissingKey,
    MissingSplitFile,
    NonFiniteValue,
    OverlappingSplit,
    ParseError,
    TruncatedFile,
    WrongArity,
)
from badfusion.kitti_io import (
    CalibrationSet,
    CameraImage,
    DatasetIndex,
    Difficulty,
    FrameBundle,
    PointCloud,
    classify_difficulty,
    format_calib,
    format_labels,
    load_frame,
    parse_calib,
    parse_labels,
    parse_velodyne,
    split_dataset,
    write_frame,
)

from conftest import make_label


# ---------------------------------------------------------------------------
# velodyne
# ---------------------------------------------------------------------------

finite_f32 = st.floats(
    min_value=-1000, max_value=1000, allow_nan=False, width=32
)


@given(st.lists(st.tuples(finite_f32, finite_f32, finite_f32, finite_f32), max_size=50))
def test_velodyne_roundtrip_bits(records):
    raw = np.array(records, dtype="<f4").reshape(-1, 4).tobytes()
    cloud = parse_velodyne(raw)
    assert cloud.to_bytes() == raw
    assert len(cloud) == len(records)


def test_velodyne_truncated():
    good = np.zeros((3, 4), dtype="<f4").tobytes()
    with pytest.raises(TruncatedFile):
        parse_velodyne(good[:-5])


def test_velodyne_rejects_nan_and_inf():
    bad = np.array([[0, 1, 2, np.nan]], dtype="<f4").tobytes()
    with pytest.raises(NonFiniteValue):
        parse_velodyne(bad)
    bad = np.array([[np.inf, 1, 2, 0]], dtype="<f4").tobytes()
    with pytest.raises(NonFiniteValue):
        parse_velodyne(bad)


def test_velodyne_empty_is_valid():
    assert len(parse_velodyne(b"")) == 0


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------

CALIB_TEXT = """P2: 300 0 124 0 0 300 70 0 0 0 1 0
R0_rect: 1 0 0 0 1 0 0 0 1
Tr_velo_to_cam: 0 -1 0 0 0 0 -1 0 1 0 0 0
"""


def test_calib_parse_and_format_roundtrip():
    calib = parse_calib(CALIB_TEXT)
    assert calib.P2.shape == (3, 4)
    again = parse_calib(format_calib(calib))
    np.testing.assert_array_equal(calib.P2, again.P2)
    np.testing.assert_array_equal(calib.Tr_velo_to_cam, again.Tr_velo_to_cam)


def test_calib_missing_key():
    with pytest.raises(MissingKey):
        parse_calib("P2: " + " ".join(["1"] * 12))


def test_calib_wrong_arity():
    with pytest.raises(WrongArity):
        parse_calib(CALIB_TEXT.replace("1 0 0 0 1 0 0 0 1", "1 0 0"))


def test_calib_non_numeric():
    with pytest.raises(ParseError):
        parse_calib(CALIB_TEXT.replace("300", "abc", 1))


def test_calib_unknown_keys_ignored():
    calib = parse_calib(CALIB_TEXT + "P0: " + " ".join(["2"] * 12) + "\n")
    np.testing.assert_array_equal(calib.R0_rect, np.eye(3))


def test_calib_validate_rejects_sheared_rotation():
    bad = CalibrationSet(
        P2=np.eye(3, 4),
        R0_rect=np.array([[1, 0.2, 0], [0, 1, 0], [0, 0, 1.0]]),
        Tr_velo_to_cam=np.eye(3, 4),
    )
    with pytest.raises(ParseError):
        bad.validate()


# ---------------------------------------------------------------------------
# labels
# ---------------------------------------------------------------------------

LABEL_LINE = "Car 0.00 0 1.85 387.63 181.54 423.81 203.12 1.67 1.87 3.69 -16.53 2.39 58.49 1.57"


def test_label_parse_fields():
    (label,) = parse_labels(LABEL_LINE)
    assert label.class_name == "Car"
    assert label.occlusion == 0
    assert label.bbox2d == (387.63, 181.54, 423.81, 203.12)
    assert label.dims == (1.67, 1.87, 3.69)
    assert label.loc == (-16.53, 2.39, 58.49)
    assert label.score is None


def test_label_line_roundtrip_exact():
    (label,) = parse_labels(LABEL_LINE)
    assert label.to_line() == LABEL_LINE


def test_label_with_score():
    (det,) = parse_labels(LABEL_LINE + " 0.8731")
    assert det.score == 0.8731
    assert det.to_line().endswith("0.8731")


def test_label_short_line_rejected():
    with pytest.raises(ParseError):
        parse_labels("Car 0.00 0 1.85 387.63")


def test_label_non_numeric_rejected():
    with pytest.raises(ParseError):
        parse_labels(LABEL_LINE.replace("58.49", "x"))


def test_labels_blank_lines_skipped():
    assert parse_labels("\n\n" + LABEL_LINE + "\n\n") != []
    assert parse_labels("") == []


def test_dontcare_preserved_verbatim():
    line = "DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10"
    (label,) = parse_labels(line)
    assert label.class_name == "DontCare"
    # canonical formatting keeps the untouched numeric content
    (again,) = parse_labels(label.to_line())
    assert again.loc == label.loc
    assert again.dims == label.dims


# ---------------------------------------------------------------------------
# difficulty tiers
# ---------------------------------------------------------------------------

@pytest.mark.parametrize(
    "height,occ,trunc,expected",
    [
        (40.0, 0, 0.15, Difficulty.EASY),
        (40.0, 0, 0.16, Difficulty.MODERATE),
        (39.9, 0, 0.0, Difficulty.MODERATE),
        (25.0, 1, 0.30, Difficulty.MODERATE),
        (25.0, 2, 0.30, Difficulty.HARD),
        (25.0, 1, 0.31, Difficulty.HARD),
        (25.0, 2, 0.50, Difficulty.HARD),
        (24.9, 0, 0.0, Difficulty.IGNORED),
        (25.0, 3, 0.0, Difficulty.IGNORED),
        (25.0, 2, 0.51, Difficulty.IGNORED),
    ],
)
def test_difficulty_boundaries(height, occ, trunc, expected):
    label = make_label(
        bbox2d=(0.0, 0.0, 30.0, height), occlusion=occ, truncation=trunc
    )
    assert classify_difficulty(label) is expected


def test_difficulty_dontcare_is_ignored():
    (label,) = parse_labels(
        "DontCare -1 -1 -10 0 0 100 100 -1 -1 -1 -1000 -1000 -1000 -10"
    )
    assert classify_difficulty(label) is Difficulty.IGNORED


# ---------------------------------------------------------------------------
# frames and splits
# ---------------------------------------------------------------------------

def test_write_load_frame_roundtrip(tmp_path, synth_frame):
    write_frame(synth_frame, tmp_path)
    index = DatasetIndex(tmp_path, [synth_frame.frame_id])
    loaded = load_frame(index, synth_frame.frame_id)
    assert loaded.cloud.to_bytes() == synth_frame.cloud.to_bytes()
    assert np.array_equal(loaded.image.pixels, synth_frame.image.pixels)
    assert format_labels(loaded.labels) == format_labels(synth_frame.labels)


def test_load_frame_missing_artifact(tmp_path, synth_frame):
    write_frame(synth_frame, tmp_path)
    (tmp_path / "calib" / f"{synth_frame.frame_id}.txt").unlink()
    with pytest.raises(MissingArtifact):
        load_frame(DatasetIndex(tmp_path, []), synth_frame.frame_id)


def test_split_dataset_reads_imagesets(synth_index):
    index = split_dataset(synth_index.root)
    assert index.train_ids == synth_index.train_ids
    assert index.valid_ids == synth_index.valid_ids


def test_split_dataset_missing_file(tmp_path):
    with pytest.raises(MissingSplitFile):
        split_dataset(tmp_path)


def test_split_dataset_rejects_overlap(tmp_path):
    sets = tmp_path / "ImageSets"
    sets.mkdir()
    (sets / "train.txt").write_text("000001\n000002\n")
    (sets / "val.txt").write_text("000002\n")
    with pytest.raises(OverlappingSplit):
        split_dataset(tmp_path)
