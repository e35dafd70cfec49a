"""Ant backpressure routing simulator."""
