"""Truck overtake detection from CAN bus signals."""
