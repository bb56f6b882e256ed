#!/usr/bin/env python3
"""
Run solver commands from JSON parameters, once or interactively.
"""
import sys
import json
import argparse
import logging

from dotenv import load_dotenv

from mgamsgd.utils.commands import CommandRegistry
from mgamsgd.utils.logger import setup_logging


def main():
    """Run commands in CLI mode."""
    load_dotenv()
    parser = argparse.ArgumentParser(description="Run solver commands in CLI mode")
    parser.add_argument("--command", type=str, help="Command to execute")
    parser.add_argument("--params", type=str, help="Parameters for the command (JSON string)")
    parser.add_argument("--interactive", action="store_true", help="Run in interactive mode")
    parser.add_argument("--progress", action="store_true", help="Show progress bars")
    parser.add_argument("--debug", action="store_true", help="Run in debug mode")

    args = parser.parse_args()

    setup_logging({"level": "DEBUG" if args.debug else "INFO"})
    logger = logging.getLogger(__name__)

    registry = CommandRegistry({"progress": args.progress})

    if args.command:
        params = {}
        if args.params:
            try:
                params = json.loads(args.params)
            except json.JSONDecodeError:
                logger.error(f"Invalid JSON parameters: {args.params}")
                sys.exit(2)
        logger.info(f"Executing command: {args.command}")
        sys.exit(registry.execute(args.command, params))

    if not args.interactive:
        parser.print_help()
        return

    print("MGA-MSGD solver - Interactive Mode")
    print("Type 'exit' to quit")
    print("Type 'help' for a list of commands")

    while True:
        try:
            line = input("\nmgamsgd> ").strip()

            if line.lower() == "exit":
                break

            if line.lower() == "help":
                print("\nAvailable commands:")
                print("  <command> <params>  - Execute a command with JSON parameters")
                print("  list                - List available commands")
                print("  exit                - Exit the program")
                print("  help                - Show this help message")
                continue

            if line.lower() == "list":
                print("\nAvailable commands:")
                for name in registry.command_definitions:
                    print(f"  {name}")
                continue

            if not line:
                continue

            parts = line.split(" ", 1)
            params = {}
            if len(parts) > 1:
                try:
                    params = json.loads(parts[1])
                except json.JSONDecodeError:
                    print(f"Error: Invalid JSON parameters: {parts[1]}")
                    continue

            code = registry.execute(parts[0], params)
            print(f"Exit code: {code}")

        except KeyboardInterrupt:
            print("\nExiting...")
            break


if __name__ == "__main__":
    main()
