#!/usr/bin/env python3
"""
Interactive runner script for the pseudo-label pipeline
"""

import os
import sys
from dotenv import load_dotenv

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from src.pipeline.cli import main as cli_main

# Load environment variables
load_dotenv()

def show_configuration():
    """Display current configuration"""
    config_file = os.getenv('WHCN_CONFIG', 'Not set (defaults)')
    output_dir = os.getenv('WHCN_OUTPUT_DIR', 'output')
    log_level = os.getenv('WHCN_LOG_LEVEL', 'INFO')

    print(f"Current Configuration:")
    print(f"  Config file: {config_file}")
    print(f"  Output directory: {output_dir}")
    print(f"  Log level: {log_level}")

def main():
    """Main function for interactive pipeline runner"""
    print("WHCN Pseudo-Label Pipeline")
    print("This script turns scene-level labels into point-level pseudo labels")
    print("-" * 60)

    # Show current configuration
    show_configuration()
    print("-" * 60)

    # Ask user for run type
    print("Choose run type:")
    print("1. Full pipeline (all stages, writes report.json)")
    print("2. Ablation suite (five component rows over 10 seeds)")

    while True:
        choice = input("Enter your choice (1 or 2): ").strip()

        if choice == '1':
            print("\nStarting full pipeline run...")
            code = cli_main(["run-all"])
            break
        elif choice == '2':
            print("\nStarting ablation suite...")
            code = cli_main(["ablate"])
            break
        else:
            print("Invalid choice. Please enter 1 or 2.")

    print("\nPipeline finished." if code == 0 else "\nPipeline failed.")

if __name__ == "__main__":
    main()
