"""Command line, REST service, distillation export and parity checks."""
