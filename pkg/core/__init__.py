"""Core module for the GBSM Bounds Lab"""
