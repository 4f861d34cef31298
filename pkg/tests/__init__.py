"""Test package for Sparse Sinkhorn WMD"""
