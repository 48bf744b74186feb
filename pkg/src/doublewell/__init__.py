"""Sympathetic cooling of (anti-)protons in double-well Penning traps."""
