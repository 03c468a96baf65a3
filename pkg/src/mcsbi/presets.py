"""Benchmark properties for the bundled models."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Preset:
    model: str
    property: str
    n_steps: int
    description: str


PRESETS = {
    "sir": Preset("sir", "P=? [ (X_I<30) U[0,10] (X_I=0) ]", 200,
                  "infected stay below 30 until the infection dies out"),
    "sir2": Preset("sir", "P=? [ (X_S>1) U[0,4] (X_I<X_R) ]", 200,
                   "more than one susceptible until recovered outnumber infected"),
    "lacz": Preset("lacz", "P=? [ (X_Ribosome>0 & X_TrRbsLacZ<200) U[0,500] (X_LacZ>150) ]", 200,
                   "free ribosomes and bounded translation until LacZ exceeds 150"),
    "viral": Preset("viral", "P=? [ (X_G<200) U[0,200] (X_V>500) ]", 200,
                    "genome stays below 200 until more than 500 virions exist"),
    "genosc": Preset("genosc", "P=? [ (X_7<19000) U[0,50] (X_9>24000) ]", 2000,
                     "X7 stays below 19000 until X9 exceeds 24000"),
}


def preset_for_model(model: str) -> Preset:
    """First preset whose model is ``model``."""
    for p in PRESETS.values():
        if p.model == model:
            return p
    raise KeyError(f"no benchmark property for model {model!r}")
