"""Homogeneous-variable modelling, analysis and simulation of smooth
nonlinear circuits: netlists, exact circuit topology, tree-enumerator
polynomials, homogeneous DAE models, state-space integration with event and
impasse handling, and equilibrium/pencil analysis for memristive circuits."""

__version__ = "0.1.0"
