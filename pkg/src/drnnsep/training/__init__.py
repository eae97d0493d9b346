"""Losses, backpropagation through time and the L-BFGS trainer."""
