"""Numerical modules for du/dt = -u + g(t, Ku) on an interval."""
