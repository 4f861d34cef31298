"""Sparse Sinkhorn WMD - Source Package"""
