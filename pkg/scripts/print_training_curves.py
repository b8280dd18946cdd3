#!/usr/bin/env python3
import argparse
import os
import sys

from otloss.config import parse_list_argument
from otloss.graphs import plot_trajectories
from otloss.toy_trainer import TRAJECTORY_COLUMNS, read_trajectory_csv

# DEFAULT VALUES - MODIFY THESE AS NEEDED
DEFAULT_RUN_FOLDERS = ["out/run"]
DEFAULT_OUT_FOLDER = "out/graphs"
DEFAULT_COLUMNS = ["total", "ce", "topo"]
DEFAULT_FILE_TYPE = "png"


def parse_arguments():
    """Parse command line arguments with sensible defaults."""
    parser = argparse.ArgumentParser(
        description="Overlay the loss curves of several train-toy runs, one chart per loss column",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s
  %(prog)s -r "out/ce-seed7,out/topo-seed7" -c "total,topo"
  %(prog)s --run-folders out/mixed --columns dice --file-type pdf
        """,
    )

    parser.add_argument(
        "-r",
        "--run-folders",
        type=parse_list_argument,
        default=DEFAULT_RUN_FOLDERS,
        help=f"Comma-separated list of train-toy output folders (default: {','.join(DEFAULT_RUN_FOLDERS)})",
    )

    parser.add_argument(
        "-c",
        "--columns",
        type=parse_list_argument,
        default=DEFAULT_COLUMNS,
        help=f"Comma-separated list of trajectory columns (default: {','.join(DEFAULT_COLUMNS)})",
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


def print_training_curves(run_folders, columns, file_type, out_folder):
    trajectories = {}
    for folder in run_folders:
        path = os.path.join(folder, "trajectory.csv")
        if not os.path.exists(path):
            print(f"Missing {path}, skipping")
            continue
        trajectories[os.path.basename(os.path.normpath(folder))] = read_trajectory_csv(path)
    if not trajectories:
        print("No trajectories found")
        return

    for column in columns:
        if column == "step" or column not in TRAJECTORY_COLUMNS:
            print(f"Skipping unknown column {column}")
            continue
        out_path = os.path.join(out_folder, f"curves_{column}.{file_type}")
        print(f"Saving file in {out_path}")
        plot_trajectories(trajectories, out_path, column=column)


def main():
    """Main entry point."""
    args = parse_arguments()

    if args.verbose:
        print("Configuration:")
        print(f"  Run folders: {args.run_folders}")
        print(f"  Columns: {args.columns}")
        print(f"  Output file type: {args.file_type}")
        print(f"  Output folder: {args.out_folder}")
        print()

    try:
        print_training_curves(
            run_folders=args.run_folders,
            columns=args.columns,
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
