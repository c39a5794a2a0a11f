"""Weighted minimal graphs and the asymptotic Plateau problem in conformal products."""
