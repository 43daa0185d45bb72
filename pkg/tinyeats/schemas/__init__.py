"""Pydantic records shared by the services, the CLI and the HTTP API."""
