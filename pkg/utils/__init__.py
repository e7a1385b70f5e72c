"""Utilities for the GBSM Bounds Lab"""
