# src/app/main.py
import logging

from flask import Flask

from src.app.simulations import bp as simulations_bp

logging.basicConfig(
    level=logging.INFO,
    format="[%(asctime)s][%(levelname)s][%(name)s] %(message)s",
    datefmt="%H:%M:%S",
)

app = Flask(__name__)
app.register_blueprint(simulations_bp)

if __name__ == "__main__":
    app.run(debug=True)
