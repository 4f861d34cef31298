#!/usr/bin/env python3
"""
Create a synthetic embeddings / corpus / queries dataset for the batch CLI
and the scaling benchmark.
"""
import argparse
import io
import os

import numpy as np
from tqdm import tqdm

from src.synthetic import document_tokens, token_name


def write_vec(path, vectors):
    """Write vectors in fastText text format, rows named w0, w1, ..."""
    with io.open(path, "w", encoding="utf-8", newline="\n") as fout:
        fout.write(f"{vectors.shape[0]} {vectors.shape[1]}\n")
        for g, row in enumerate(tqdm(vectors, desc="Embeddings", unit="row")):
            fout.write(token_name(g) + " " + " ".join(repr(float(x)) for x in row) + "\n")
    print(f"✅ Created: {path}")


def write_documents(path, rng, vocab_size, num_docs, mean_length, label=True):
    """One document per line, optionally prefixed with a __label__ tag."""
    with io.open(path, "w", encoding="utf-8", newline="\n") as fout:
        for j in range(num_docs):
            length = max(1, int(rng.poisson(mean_length)))
            tokens = document_tokens(rng, vocab_size, length)
            prefix = f"__label__{j % 14 + 1} " if label else ""
            fout.write(prefix + " ".join(tokens) + "\n")
    print(f"✅ Created: {path}")


def main():
    """Generate the dataset."""
    parser = argparse.ArgumentParser(description="Write a synthetic WMD dataset")
    parser.add_argument("--out-dir", default="test_data")
    parser.add_argument("--vocab", type=int, default=20_000)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--docs", type=int, default=2_000)
    parser.add_argument("--doc-length", type=float, default=20.0,
                        help="mean tokens per document (0.1%% of 20,000 words)")
    parser.add_argument("--queries", type=int, default=10)
    parser.add_argument("--query-length", type=float, default=38.0)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    os.makedirs(args.out_dir, exist_ok=True)
    rng = np.random.default_rng(args.seed)

    print("=" * 60)
    print("Creating Synthetic WMD Dataset")
    print("=" * 60)
    print()

    write_vec(os.path.join(args.out_dir, "embeddings.vec"), rng.random((args.vocab, args.dim)))
    write_documents(os.path.join(args.out_dir, "corpus.txt"), rng,
                    args.vocab, args.docs, args.doc_length)
    write_documents(os.path.join(args.out_dir, "queries.txt"), rng,
                    args.vocab, args.queries, args.query_length, label=False)

    print()
    print("=" * 60)
    print(f"✅ Dataset written to {args.out_dir}/")
    print("=" * 60)
    print()
    print("🚀 Run the benchmark with:")
    print(f"   python app.py --embeddings {args.out_dir}/embeddings.vec "
          f"--corpus {args.out_dir}/corpus.txt --queries {args.out_dir}/queries.txt "
          f"--output {args.out_dir}/wmd.csv --bench 1,2,4")


if __name__ == "__main__":
    main()
