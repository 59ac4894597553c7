"""Kooperative Mehrwege-SLAM für Fahrzeugteams (Simulation und Auswertung)."""

__version__ = "0.1.0"
