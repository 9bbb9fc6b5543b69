from demrisk.cli import app

app(prog_name="demrisk")
