import datetime as dt
from pathlib import Path

import pytest

from covertsem._utils import (
    format_snr,
    get_stage_name,
    get_timestamp,
    parse_timestamp_from_filename,
    sanitize,
)


def sample_function():
    pass


class ExampleClass:
    def method(self):
        pass

    @staticmethod
    def static_method():
        pass


class TestGetStageName:
    def test_global_function(self):
        assert get_stage_name(sample_function) == "test_utils_sample_function"

    def test_instance_method(self):
        assert get_stage_name(ExampleClass().method) == "test_utils_ExampleClass_method"

    def test_static_method(self):
        assert (
            get_stage_name(ExampleClass.static_method)
            == "test_utils_ExampleClass_static_method"
        )

    def test_nested_function(self):
        def outer():
            def inner():
                pass

            return inner

        expected = "test_utils_TestGetStageName_test_nested_function__locals__outer__locals__inner"
        assert get_stage_name(outer()) == expected

    def test_lambda_function(self):
        f = lambda x: x  # noqa: E731
        expected = "test_utils_TestGetStageName_test_lambda_function__locals___lambda_"
        assert get_stage_name(f) == expected


@pytest.mark.parametrize(
    "name,expected",
    [("codec", "codec"), ("attack/genai glass-box", "attack_genai_glass_box"), ("a.b", "a_b")],
)
def test_sanitize(name, expected):
    assert sanitize(name) == expected


@pytest.mark.parametrize(
    "snr_db,expected",
    [(5, "snr5"), (10.0, "snr10"), (-2.5, "snr-2p5"), (0, "snr0"), (float("inf"), "snrinf")],
)
def test_format_snr(snr_db, expected):
    assert format_snr(snr_db) == expected


class TestTimestamps:
    def test_round_trip_through_filename(self):
        stamp = get_timestamp()
        path = Path(f"codec_0123abcd_{stamp}.ckpt")
        parsed = parse_timestamp_from_filename(path)
        assert abs(dt.datetime.now() - parsed) < dt.timedelta(minutes=1)

    def test_known_value(self):
        path = Path("/runs/steganography_ff00_20240131_235959.ckpt")
        assert parse_timestamp_from_filename(path) == dt.datetime(2024, 1, 31, 23, 59, 59)

    def test_malformed_name_raises(self):
        with pytest.raises(ValueError):
            parse_timestamp_from_filename(Path("codec.ckpt"))
