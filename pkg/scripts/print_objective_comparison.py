#!/usr/bin/env python3
import argparse
import csv
import os
import sys

from otloss.config import parse_list_argument
from otloss.graphs import plot_objective_comparison

# DEFAULT VALUES - MODIFY THESE AS NEEDED
DEFAULT_INPUT_FOLDERS = ["out/compare"]
DEFAULT_OUT_FOLDER = "out/graphs"
DEFAULT_METRICS = ["ir", "ad"]
DEFAULT_FILE_TYPE = "png"
METRIC_LABELS = {"ir": "Ingredient recall (%)", "ad": "Action distance (%)"}


def read_comparison(path):
    """Rows of a comparison.csv written by `otloss compare`, numbers parsed."""
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    for row in rows:
        row["seeds"] = int(row["seeds"])
        for key in ("ir", "ir_conf_int", "ad", "ad_conf_int"):
            row[key] = float(row[key]) if row[key] else 0.0
    return rows


def parse_arguments():
    """Parse command line arguments with sensible defaults."""
    parser = argparse.ArgumentParser(
        description="Chart toy IR / AD per training objective from one or more comparison runs",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s
  %(prog)s -i "out/compare-5seeds,out/compare-10seeds" -m ir
  %(prog)s --input-folders out/compare --file-type pdf --out-folder figures
        """,
    )

    parser.add_argument(
        "-i",
        "--input-folders",
        type=parse_list_argument,
        default=DEFAULT_INPUT_FOLDERS,
        help=f"Comma-separated list of folders holding comparison.csv (default: {','.join(DEFAULT_INPUT_FOLDERS)})",
    )

    parser.add_argument(
        "-m",
        "--metrics",
        type=parse_list_argument,
        default=DEFAULT_METRICS,
        help=f"Comma-separated list of metrics to chart (default: {','.join(DEFAULT_METRICS)})",
    )

    parser.add_argument(
        "-ft",
        "--file-type",
        type=str,
        default=DEFAULT_FILE_TYPE,
        help=f"File type for the output files (default: {DEFAULT_FILE_TYPE})",
    )

    parser.add_argument(
        "-o",
        "--out-folder",
        type=str,
        default=DEFAULT_OUT_FOLDER,
        help=f"Folder where the output files will be saved (default: {DEFAULT_OUT_FOLDER})",
    )

    parser.add_argument("-v", "--verbose", action="store_true", help="Enable verbose output")

    return parser.parse_args()


def print_objective_comparison(input_folders, metrics, file_type, out_folder):
    for folder in input_folders:
        rows = read_comparison(os.path.join(folder, "comparison.csv"))
        name = os.path.basename(os.path.normpath(folder))
        for metric in metrics:
            if metric not in METRIC_LABELS:
                print(f"Skipping unknown metric {metric}")
                continue
            out_path = os.path.join(out_folder, f"{name}_{metric}.{file_type}")
            print(f"Saving file in {out_path}")
            plot_objective_comparison(rows, metric, out_path, y_label=METRIC_LABELS[metric])


def main():
    """Main entry point."""
    args = parse_arguments()

    if args.verbose:
        print("Configuration:")
        print(f"  Input folders: {args.input_folders}")
        print(f"  Metrics: {args.metrics}")
        print(f"  Output file type: {args.file_type}")
        print(f"  Output folder: {args.out_folder}")
        print()

    try:
        print_objective_comparison(
            input_folders=args.input_folders,
            metrics=args.metrics,
            file_type=args.file_type,
            out_folder=args.out_folder,
        )
    except KeyboardInterrupt:
        print("\nOperation cancelled by user.")
        return 1
    except Exception as e:
        print(f"Error: {e}")
        return 1

    return 0


if __name__ == "__main__":
    sys.exit(main())
