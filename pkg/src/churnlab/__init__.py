"""Churn analytics: preprocessing, tree models, TreeSHAP, Kaplan-Meier and RFM."""

__version__ = "0.1.0"
