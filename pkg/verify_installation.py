#!/usr/bin/env python3
"""
Checks the Python version, the numerical stack and the compiled kernels.

Prints the installed versions so they can be pasted into a bug report.
"""
import importlib
import os
import sys

MIN_PYTHON = (3, 10)


def check_import(module_name, package_name=None):
    display_name = package_name or module_name
    try:
        module = importlib.import_module(module_name)
    except ImportError:
        print(f"❌ {display_name} is NOT installed")
        return False
    version = getattr(module, "__version__", "unknown")
    print(f"✅ {display_name} {version}")
    return True


def check_python_version():
    version = sys.version_info
    found = f"{version.major}.{version.minor}.{version.micro}"
    if version[:2] >= MIN_PYTHON:
        print(f"✅ Python {found}, {os.cpu_count()} CPUs")
        return True
    print(f"❌ Python {found}; {MIN_PYTHON[0]}.{MIN_PYTHON[1]} or higher is required")
    return False


def check_kernels():
    """Compile and run the fused kernel on the toy instance."""
    try:
        from src.ingest import EmbeddingMatrix, QueryHistogram
        from src.matrix_core import doc_matrix_from_entries
        from src.sinkhorn import SolverConfig, sinkhorn_wmd
        import numpy as np

        emb = EmbeddingMatrix(np.array([[0.0, 0.0], [3.0, 4.0], [0.0, 1.0]]),
                              {"a": 0, "b": 1, "c": 2})
        corpus = doc_matrix_from_entries(3, 2, [(0, 0, 1), (1, 1, 1)])
        result = sinkhorn_wmd(QueryHistogram(3, [0], [1.0]), corpus, emb, SolverConfig(), workers=2)
        if abs(result.distances[0]) <= 1e-12 and abs(result.distances[1] - 5.0) <= 1e-12:
            print("✅ numba kernels compiled; toy distances are [0, 5]")
            return True
        print(f"❌ unexpected toy distances {result.distances.tolist()}")
        return False
    except Exception as e:
        print(f"❌ Kernel check failed: {e}")
        return False


def main():
    """Run all checks."""
    print("=" * 60)
    print("Sparse Sinkhorn WMD - Installation Verification")
    print("=" * 60)
    print()

    all_ok = True

    print("🐍 Interpreter")
    all_ok &= check_python_version()
    print()

    print("📦 Numerical stack")
    required = [
        ("numpy", "numpy"),
        ("numba", "numba"),
        ("scipy", "scipy"),
        ("pandas", "pandas"),
        ("tqdm", "tqdm"),
    ]

    for module, package in required:
        all_ok &= check_import(module, package)

    print()

    print("🔧 Test runner")
    if not check_import("pytest", "pytest"):
        print("   ⚠️  pytest is optional; the test files also run as plain scripts")

    print()

    if all_ok:
        print("⚙️  Checking JIT kernels...")
        all_ok &= check_kernels()
        print()

    # Summary
    print("=" * 60)
    if all_ok:
        print("✅ Stack and kernels are ready")
        print()
        print("🚀 You can now run the CLI with:")
        print("   python app.py --help")
    else:
        print("❌ Installation is incomplete; run: pip install -r requirements.txt")
    print("=" * 60)
    return 0 if all_ok else 1


if __name__ == "__main__":
    sys.exit(main())
