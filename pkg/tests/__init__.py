"""
Test package for the Droid agent.
"""