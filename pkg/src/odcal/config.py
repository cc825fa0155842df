"""Key-value config file holding :class:`SimConfig` and :class:`FdParams`.

INI syntax. Simulator keys live under ``[sim]`` (keys before any section
header are read as ``[sim]`` too), analytical-model keys under
``[analytical]``. Keys are the dataclass field names::

    horizon_s = 7200
    replications = 5

    [analytical]
    alpha1 = 2.0
"""
from __future__ import annotations

import configparser
from dataclasses import fields

from .analytical import FdParams
from .errors import ParseError, ValidationError
from .mesosim import SimConfig


def _coerce(cls, section: dict, where: str):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, raw in section.items():
        if key not in known:
            raise ValidationError(f"{where}: unknown key '{key}'")
        default = getattr(cls(), key)
        text = raw.strip()
        if text.lower() in {"", "none"}:
            kwargs[key] = None
            continue
        try:
            if isinstance(default, bool):
                kwargs[key] = text.lower() in {"1", "true", "yes", "on"}
            elif isinstance(default, int):
                kwargs[key] = int(text)
            else:
                kwargs[key] = float(text)
        except ValueError as exc:
            raise ParseError(f"{where}: bad value for '{key}': {raw!r}") from exc
    return cls(**kwargs)


def parse_config(text: str, where="<config>") -> tuple[SimConfig, FdParams]:
    parser = configparser.ConfigParser()
    try:
        parser.read_string("[sim]\n" + text if not text.lstrip().startswith("[") else text)
    except configparser.Error as exc:
        raise ParseError(f"{where}: {exc}") from exc
    unknown = set(parser.sections()) - {"sim", "analytical"}
    if unknown:
        raise ValidationError(f"{where}: unknown section(s) {sorted(unknown)}")
    sim = _coerce(SimConfig, dict(parser["sim"]) if parser.has_section("sim") else {}, where)
    fd = _coerce(FdParams, dict(parser["analytical"]) if parser.has_section("analytical") else {}, where)
    sim.validate()
    fd.validate()
    return sim, fd


def load_config(path) -> tuple[SimConfig, FdParams]:
    with open(path) as fh:
        return parse_config(fh.read(), where=str(path))


def dump_config(sim: SimConfig, fd: FdParams) -> str:
    lines = ["[sim]"]
    for f in fields(SimConfig):
        lines.append(f"{f.name} = {_fmt(getattr(sim, f.name))}")
    lines += ["", "[analytical]"]
    for f in fields(FdParams):
        lines.append(f"{f.name} = {_fmt(getattr(fd, f.name))}")
    return "\n".join(lines) + "\n"


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def save_config(path, sim: SimConfig, fd: FdParams):
    with open(path, "w") as fh:
        fh.write(dump_config(sim, fd))
