"""Charge-cycle dynamics: the NV0 Markov chain and blinking analysis."""
