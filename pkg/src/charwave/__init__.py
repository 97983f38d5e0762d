"""Numerical solver and diagnostics for the characteristic Cauchy problem
u_xy = F(x, y, u) with data on a regularised curve y = f_eps(x)."""

__version__ = "0.1.0"
