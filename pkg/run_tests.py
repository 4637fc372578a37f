#!/usr/bin/env python3
"""
Test runner script for cfextract
Usage: python run_tests.py [extra pytest args]
"""
import subprocess
import sys


def run_tests(extra_args=None):
    """Run the test suite with pytest"""
    try:
        subprocess.run([
            sys.executable, "-m", "pytest",
            "tests/",
            "-v",
            "--tb=short",
            "--disable-warnings",
            *(extra_args or []),
        ], check=True)

        print("\nAll tests passed")
        return True

    except subprocess.CalledProcessError as e:
        print(f"\nTests failed with exit code {e.returncode}")
        return False
    except FileNotFoundError:
        print("pytest not found. Install with: pip install -r requirements.txt")
        return False


if __name__ == "__main__":
    success = run_tests(sys.argv[1:])
    sys.exit(0 if success else 1)
