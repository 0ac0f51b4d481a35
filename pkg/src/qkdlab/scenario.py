"""Scenario files: JSON in, validated config objects out.

A scenario bundles up to five blocks: `protocol`, `eve`, `info`, `compose`,
and `output`.  Parsing is strict: unknown keys anywhere are rejected with
their dotted path, wrong types name the path and expected type, and
malformed JSON reports line and column.  Seeds are mandatory wherever a
block draws randomness, so a scenario file pins its outputs completely.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any

from .compose import CompositionNode, CompositionTree, repeated_chain
from .qinfo import MeasurementFamilyConfig
from .qkdsim import EveStrategy, ProtocolConfig

SWEEP_PARAMS = ("eve.p", "eve.probe_angle", "protocol.qber_threshold")


class ScenarioError(ValueError):
    """A scenario file failed to parse or validate."""


@dataclass(frozen=True)
class OutputConfig:
    format: str = "json"
    path: str | None = None


@dataclass(frozen=True)
class Scenario:
    """Validated scenario: any block may be absent except where a command needs it."""

    protocol: ProtocolConfig | None
    eve: EveStrategy | None
    info: MeasurementFamilyConfig | None
    compose: CompositionTree | None
    output: OutputConfig
    raw: dict = field(repr=False, default_factory=dict)


def _type_name(value: Any) -> str:
    return type(value).__name__


def _expect_int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"{path}: expected an integer, got {_type_name(value)}")
    return value


def _expect_number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{path}: expected a number, got {_type_name(value)}")
    return float(value)


def _expect_str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise ScenarioError(f"{path}: expected a string, got {_type_name(value)}")
    return value


def _expect_block(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        raise ScenarioError(f"{path}: expected an object, got {_type_name(value)}")
    return value


def _check_keys(block: dict, path: str, allowed: tuple[str, ...], required: tuple[str, ...]) -> None:
    for key in block:
        if key not in allowed:
            raise ScenarioError(
                f"{path}.{key}: unknown key (allowed: {', '.join(allowed)})"
            )
    for key in required:
        if key not in block:
            raise ScenarioError(f"{path}.{key}: required key is missing")


def _parse_protocol(block: dict) -> ProtocolConfig:
    path = "protocol"
    allowed = ("n", "test_fraction", "qber_threshold", "m_out", "mode", "trials", "seed")
    _check_keys(block, path, allowed, ("n", "test_fraction", "qber_threshold", "m_out", "seed"))
    mode = _expect_str(block["mode"], f"{path}.mode") if "mode" in block else "exact"
    trials = None
    if block.get("trials") is not None:
        trials = _expect_int(block["trials"], f"{path}.trials")
    try:
        return ProtocolConfig(
            n=_expect_int(block["n"], f"{path}.n"),
            test_fraction=_expect_number(block["test_fraction"], f"{path}.test_fraction"),
            qber_threshold=_expect_number(block["qber_threshold"], f"{path}.qber_threshold"),
            m_out=_expect_int(block["m_out"], f"{path}.m_out"),
            mode=mode,
            trials=trials,
            seed=_expect_int(block["seed"], f"{path}.seed"),
        )
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def _parse_eve(block: dict) -> EveStrategy:
    path = "eve"
    _check_keys(block, path, ("kind", "p", "probe_angle"), ("kind",))
    p = None
    if block.get("p") is not None:
        p = _expect_number(block["p"], f"{path}.p")
    angle = None
    if block.get("probe_angle") is not None:
        angle = _expect_number(block["probe_angle"], f"{path}.probe_angle")
    try:
        return EveStrategy(kind=_expect_str(block["kind"], f"{path}.kind"), p=p, probe_angle=angle)
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def _parse_info(block: dict) -> MeasurementFamilyConfig:
    path = "info"
    allowed = ("family", "grid_size", "refinement_rounds", "outcome_count", "seed")
    _check_keys(block, path, allowed, ("seed",))
    kwargs: dict[str, Any] = {"seed": _expect_int(block["seed"], f"{path}.seed")}
    if "family" in block:
        kwargs["family"] = _expect_str(block["family"], f"{path}.family")
    if block.get("grid_size") is not None:
        kwargs["grid_size"] = _expect_int(block["grid_size"], f"{path}.grid_size")
    if "refinement_rounds" in block:
        kwargs["refinement_rounds"] = _expect_int(block["refinement_rounds"], f"{path}.refinement_rounds")
    if block.get("outcome_count") is not None:
        kwargs["outcome_count"] = _expect_int(block["outcome_count"], f"{path}.outcome_count")
    try:
        return MeasurementFamilyConfig(**kwargs)
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def _parse_compose(block: dict) -> CompositionTree:
    path = "compose"
    _check_keys(block, path, ("nodes", "repeated"), ())
    if ("nodes" in block) == ("repeated" in block):
        raise ScenarioError(f"{path}: give exactly one of 'nodes' or 'repeated'")
    try:
        if "repeated" in block:
            rep = _expect_block(block["repeated"], f"{path}.repeated")
            _check_keys(
                rep, f"{path}.repeated", ("rounds", "eps_round", "eps_amplifier"),
                ("rounds", "eps_round", "eps_amplifier"),
            )
            return repeated_chain(
                _expect_int(rep["rounds"], f"{path}.repeated.rounds"),
                _expect_number(rep["eps_round"], f"{path}.repeated.eps_round"),
                _expect_number(rep["eps_amplifier"], f"{path}.repeated.eps_amplifier"),
            )
        nodes_raw = block["nodes"]
        if not isinstance(nodes_raw, list):
            raise ScenarioError(f"{path}.nodes: expected a list, got {_type_name(nodes_raw)}")
        nodes = []
        for i, entry in enumerate(nodes_raw):
            npath = f"{path}.nodes[{i}]"
            entry = _expect_block(entry, npath)
            _check_keys(entry, npath, ("id", "name", "eps", "parent"), ("id", "eps"))
            parent = None
            if entry.get("parent") is not None:
                parent = _expect_str(entry["parent"], f"{npath}.parent")
            nodes.append(
                CompositionNode(
                    node_id=_expect_str(entry["id"], f"{npath}.id"),
                    name=_expect_str(entry.get("name", entry["id"]), f"{npath}.name"),
                    eps=_expect_number(entry["eps"], f"{npath}.eps"),
                    parent=parent,
                )
            )
        return CompositionTree(nodes)
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def _parse_output(block: dict) -> OutputConfig:
    path = "output"
    _check_keys(block, path, ("format", "path"), ())
    fmt = _expect_str(block["format"], f"{path}.format") if "format" in block else "json"
    if fmt not in ("json", "csv"):
        raise ScenarioError(f"{path}.format: must be 'json' or 'csv', got {fmt!r}")
    out_path = None
    if block.get("path") is not None:
        out_path = _expect_str(block["path"], f"{path}.path")
    return OutputConfig(format=fmt, path=out_path)


def parse_scenario(data: dict) -> Scenario:
    """Validate a parsed JSON object into a Scenario."""
    top = _expect_block(data, "scenario")
    _check_keys(top, "scenario", ("protocol", "eve", "info", "compose", "output"), ())
    protocol = _parse_protocol(_expect_block(top["protocol"], "protocol")) if "protocol" in top else None
    eve = _parse_eve(_expect_block(top["eve"], "eve")) if "eve" in top else None
    info = _parse_info(_expect_block(top["info"], "info")) if "info" in top else None
    compose = _parse_compose(_expect_block(top["compose"], "compose")) if "compose" in top else None
    output = _parse_output(_expect_block(top["output"], "output")) if "output" in top else OutputConfig()
    return Scenario(protocol=protocol, eve=eve, info=info, compose=compose, output=output, raw=top)


def load_scenario(path: str) -> Scenario:
    """Read and validate a scenario file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror or exc}") from exc
    try:
        return parse_scenario(data)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def apply_sweep_value(scenario: Scenario, param: str, value: float) -> Scenario:
    """A copy of the scenario with one sweepable parameter replaced."""
    if param not in SWEEP_PARAMS:
        raise ScenarioError(f"sweep parameter must be one of {', '.join(SWEEP_PARAMS)}, got {param!r}")
    try:
        if param == "protocol.qber_threshold":
            if scenario.protocol is None:
                raise ScenarioError("sweep over protocol.qber_threshold needs a protocol block")
            return replace(scenario, protocol=replace(scenario.protocol, qber_threshold=value))
        if scenario.eve is None:
            raise ScenarioError(f"sweep over {param} needs an eve block")
        if param == "eve.p":
            return replace(scenario, eve=replace(scenario.eve, p=value))
        return replace(scenario, eve=replace(scenario.eve, probe_angle=value))
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(f"sweep {param}={value!r}: {exc}") from exc
