"""Exact and asymptotic statistics of MIMO-OFDM mutual information."""
