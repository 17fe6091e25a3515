"""Config file handling for the command line tools.

A config file is a JSON object whose top-level keys are subcommand names
and whose values override that subcommand's defaults. Unknown sections or
keys are errors rather than silent no-ops; a typo in a config should never
quietly run with defaults.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Mapping

ENV_VAR = "MEETLAB_CONFIG"

DEFAULTS: dict[str, dict[str, Any]] = {
    "simulate": {
        "sessions": 1,
        "num_speakers": 2,
        "num_utterances": 10,
        "utterance_words": [3, 8],
        "word_duration": 0.4,
        "vocab_size": 50,
        "shared_vocab": False,
        "overlap_ratio": 0.0,
        "overlap_tol": 0.05,
        "sample_rate": 8000,
        "seed": 0,
        "copy_prob": 0.0,
        "move_prob": 0.0,
        "leak_gain": 0.5,
        "model": "oracle",
        "sub_rate": 0.1,
        "lattice_density": 0,
    },
    "stitch": {
        "window": 4.0,
        "shift": 3.0,
        "scramble_seed": None,
    },
    "vad": {
        "frame_len": 0.025,
        "hop": 0.010,
        "energy_floor": 0.001,
        "ratio_threshold": 0.2,
        "min_speech": 0.2,
        "min_gap": 0.3,
        "pad": 0.1,
    },
    "diarize": {
        "embedder": "spectral",
        "bands": 8,
        "k": 2,
        "context": 3.0,
        "search_window": 4.0,
        "sim_threshold": 0.5,
        "merge_gap": 3.0,
        "restarts": 50,
        "max_iter": 100,
        "seed": 0,
    },
    "cr": {
        "direction": "primary_to_cross",
        "hyp_kind": "one_best",
    },
    "score": {
        "metric": "cpwer",
        "max_streams": 4,
    },
    "segfix": {
        "kinds": ["leak", "missing", "merge", "boundary"],
        "leak_overlap": 0.2,
        "coverage": 0.9,
        "snap": 0.5,
        "min_speech": 0.2,
    },
    "report": {},
}


class ConfigError(Exception):
    """A config file or option set that cannot be used as given."""


def load_config(path: str | Path | None) -> dict[str, dict[str, Any]]:
    """Read and validate a config file.

    With ``path`` None the ``MEETLAB_CONFIG`` environment variable is
    consulted; if that is unset too, an empty config is returned.

    Raises:
        ConfigError: Unreadable file, unsupported format, non-object
            layout, or any section/key not present in ``DEFAULTS``.
    """
    if path is None:
        env = os.environ.get(ENV_VAR, "").strip()
        if not env:
            return {}
        path = env
    p = Path(path)
    if p.suffix.lower() == ".toml":
        raise ConfigError(
            f"{p}: TOML configs need Python 3.11+; rewrite it as JSON"
        )
    try:
        raw = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{p}: top level must be an object")
    for section, values in doc.items():
        if section not in DEFAULTS:
            known = ", ".join(sorted(DEFAULTS))
            raise ConfigError(f"{p}: unknown section {section!r} (known: {known})")
        if not isinstance(values, dict):
            raise ConfigError(f"{p}: section {section!r} must be an object")
        for key in values:
            if key not in DEFAULTS[section]:
                known = ", ".join(sorted(DEFAULTS[section])) or "(none)"
                raise ConfigError(
                    f"{p}: unknown key {key!r} in section {section!r} "
                    f"(known: {known})"
                )
    return doc


def resolve(
    section: str,
    config: Mapping[str, Mapping[str, Any]],
    overrides: Mapping[str, Any],
) -> dict[str, Any]:
    """Defaults, overlaid by the config file, overlaid by set CLI flags.

    ``overrides`` entries whose value is None count as unset.
    """
    if section not in DEFAULTS:
        raise ConfigError(f"unknown section {section!r}")
    merged = dict(DEFAULTS[section])
    merged.update(config.get(section, {}))
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in merged:
            raise ConfigError(f"unknown option {key!r} for section {section!r}")
        merged[key] = value
    return merged
