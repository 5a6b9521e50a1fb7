"""Python access to the mmsim simulation core."""

import os

from ._core import (  # noqa: F401
    ClockFitError,
    HashMismatch,
    PlacementError,
    ReplayDivergence,
    ReplayFormatError,
    ReplayIoError,
    StreamError,
    decode_header,
    encode_bye,
    encode_ping,
    estimate_offset,
    fit_clock_map,
    fixations,
    metrics,
    place,
    read_text,
    replay,
    validate_scenario,
)


def load_placement(path):
    """Placements for the scenario file at `path`."""
    return place(read_text(os.fspath(path)))
