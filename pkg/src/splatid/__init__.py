"""splatid: identifiability diagnostics and projected-gradient fitting for
time-varying Gaussian-splat appearance models.

The package factors into: spatio-temporal bases (:mod:`splatid.basis`), scene
and observation-design construction (:mod:`splatid.scene`), a reference
renderer (:mod:`splatid.render`), analytic appearance Jacobians
(:mod:`splatid.jacobians`), Fisher-information/CRB diagnostics
(:mod:`splatid.infogeo`), null-space projected fitting (:mod:`splatid.opg`),
temporal total-variation regularization (:mod:`splatid.regtv`), experiment
orchestration (:mod:`splatid.fitlab`), and a CLI (:mod:`splatid.cli`).
"""
from __future__ import annotations

__version__ = "0.1.0"
