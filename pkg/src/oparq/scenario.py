"""Scenario files: INI sections, dB at the boundary, linear inside."""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional

from .arq import LinkConfig, TrafficModel

POLICY_SOURCES = ("explicit", "equal", "optimal")


def _fraction(text: str) -> float:
    return float(Fraction(text.strip()))


def _floats(text: str) -> tuple[float, ...]:
    return tuple(_fraction(t) for t in text.split(",") if t.strip())


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class Sweep:
    start: float
    stop: float
    step: float

    def __post_init__(self):
        if self.step <= 0 or self.start > self.stop:
            raise ValueError(f"bad sweep {self}: need start <= stop and step > 0")

    def points(self) -> list[float]:
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return [round(self.start + k * self.step, 12) for k in range(count)]


@dataclass(frozen=True)
class SimBlock:
    num_slots: int = 1_000_000
    seed: int = 1
    arrivals: str = "constant"
    fading: str = "independent"
    replications: int = 1


@dataclass(frozen=True)
class Scenario:
    n: int
    R: float
    p_p_dB: float
    p_s_dB: float
    lambda_s: float
    eps_s_t: float
    eps_p_t: float
    lambda_p: Optional[float] = None
    sweep: Optional[Sweep] = None
    alpha: Optional[float] = None
    policy_source: str = "optimal"
    q: tuple[float, ...] = ()
    grid_step: float = 0.01
    monotone: bool = True
    sim: Optional[SimBlock] = None
    output: Optional[str] = None

    def __post_init__(self):
        if (self.lambda_p is None) == (self.sweep is None):
            raise ValueError("give exactly one of lambda_p or lambda_p_sweep")
        if self.policy_source not in POLICY_SOURCES:
            raise ValueError(f"policy source must be one of {POLICY_SOURCES}")
        if self.policy_source == "explicit" and len(self.q) != self.M:
            raise ValueError(f"explicit policy needs {self.M} entries, got {len(self.q)}")
        LinkConfig.from_db(self.n, self.R, self.p_p_dB, self.p_s_dB)

    @property
    def link(self) -> LinkConfig:
        return LinkConfig.from_db(self.n, self.R, self.p_p_dB, self.p_s_dB)

    def traffic(self, lambda_p: float) -> TrafficModel:
        return TrafficModel.build(lambda_p, self.lambda_s, self.alpha)

    @property
    def M(self) -> int:
        return TrafficModel.build(0.0, self.lambda_s).M_hi

    def lambda_points(self) -> list[float]:
        return [self.lambda_p] if self.sweep is None else self.sweep.points()

    def with_overrides(self, seed: Optional[int] = None, grid_step: Optional[float] = None) -> "Scenario":
        out = self
        if grid_step is not None:
            out = replace(out, grid_step=grid_step)
        if seed is not None:
            out = replace(out, sim=replace(out.sim or SimBlock(), seed=seed))
        return out

    # -- serialization -----------------------------------------------------

    @classmethod
    def from_parser(cls, cp: configparser.ConfigParser) -> "Scenario":
        link, traffic, targets = cp["link"], cp["traffic"], cp["targets"]
        pol = cp["policy"] if cp.has_section("policy") else {}
        kwargs: dict = dict(
            n=int(link["n"]),
            R=_fraction(link["R"]),
            p_p_dB=_fraction(link["p_p_dB"]),
            p_s_dB=_fraction(link["p_s_dB"]),
            lambda_s=_fraction(traffic["lambda_s"]),
            eps_s_t=_fraction(targets["eps_s_t"]),
            eps_p_t=_fraction(targets["eps_p_t"]),
        )
        if "lambda_p" in traffic:
            kwargs["lambda_p"] = _fraction(traffic["lambda_p"])
        if "lambda_p_sweep" in traffic:
            kwargs["sweep"] = Sweep(*_floats(traffic["lambda_p_sweep"]))
        if "alpha" in traffic:
            kwargs["alpha"] = _fraction(traffic["alpha"])
        if pol:
            kwargs["policy_source"] = pol.get("source", "optimal").strip()
            if "q" in pol:
                kwargs["q"] = _floats(pol["q"])
            if "grid_step" in pol:
                kwargs["grid_step"] = _fraction(pol["grid_step"])
            if "monotone" in pol:
                kwargs["monotone"] = cp.getboolean("policy", "monotone")
        if cp.has_section("sim"):
            s = cp["sim"]
            kwargs["sim"] = SimBlock(
                num_slots=int(float(s.get("num_slots", SimBlock.num_slots))),
                seed=int(s.get("seed", SimBlock.seed)),
                arrivals=s.get("arrivals", SimBlock.arrivals).strip(),
                fading=s.get("fading", SimBlock.fading).strip(),
                replications=int(s.get("replications", SimBlock.replications)),
            )
        if cp.has_section("output") and "path" in cp["output"]:
            kwargs["output"] = cp["output"]["path"].strip()
        return cls(**kwargs)

    @classmethod
    def loads(cls, text: str) -> "Scenario":
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        cp.optionxform = str
        cp.read_string(text)
        return cls.from_parser(cp)

    @classmethod
    def load(cls, path: str) -> "Scenario":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())

    def dumps(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp["link"] = {"n": str(self.n), "R": _fmt(self.R), "p_p_dB": _fmt(self.p_p_dB), "p_s_dB": _fmt(self.p_s_dB)}
        traffic = {"lambda_s": _fmt(self.lambda_s)}
        if self.lambda_p is not None:
            traffic["lambda_p"] = _fmt(self.lambda_p)
        else:
            traffic["lambda_p_sweep"] = ", ".join(_fmt(v) for v in (self.sweep.start, self.sweep.stop, self.sweep.step))
        if self.alpha is not None:
            traffic["alpha"] = _fmt(self.alpha)
        cp["traffic"] = traffic
        cp["targets"] = {"eps_s_t": _fmt(self.eps_s_t), "eps_p_t": _fmt(self.eps_p_t)}
        pol = {"source": self.policy_source, "grid_step": _fmt(self.grid_step),
               "monotone": "true" if self.monotone else "false"}
        if self.q:
            pol["q"] = ", ".join(_fmt(v) for v in self.q)
        cp["policy"] = pol
        if self.sim is not None:
            cp["sim"] = {k: str(v) for k, v in self.sim.__dict__.items()}
        if self.output is not None:
            cp["output"] = {"path": self.output}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()
