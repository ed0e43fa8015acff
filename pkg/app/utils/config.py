import configparser
import logging
import os

# Default values
DEFAULTS = {
    "general": {
        "workers": "0",
        "outputs": "./results",
    },
    "simulation": {
        "burnInFraction": "0.1",
        "queueCap": "10000000",
        "minEpochs": "200",
        "tieTolerance": "1e-12",
        "interruptCheckEvery": "65536",
        "samplerBlock": "4096",
    },
    "clocks": {
        "bracket": "50",
        "tolerance": "1e-13",
        "radiusFactor": "0.5",
    },
    "analyzer": {
        "quadTolerance": "1e-10",
        "tailThreshold": "1e-12",
        "oracleTail": "1e-12",
        "ksGridPoints": "10000",
    },
    "diffusion": {
        "maxStep": "0.1",
        "epsilon": "0.01",
        "binWidth": "0.01",
        "reflection": "mirror",
    },
    "logging": {
        "level": "INFO",
        "file": "./logs/sdq.log",
    },
}


class ConfigNamespace:
    """
    A namespace wrapper for configuration sections that provides automatic type casting.

    This class wraps configuration sections and automatically casts string values
    to appropriate Python types (boolean, integer, float) while preserving the
    original string format for values that can't be automatically converted.
    """

    def __init__(self, section: str, values: dict):
        """
        Initialize a configuration namespace.

        Parameters:
            section (str): Name of the configuration section
            values (dict): Dictionary of configuration values
        """
        self._section = section
        self._values = values

    def auto_cast(self, value):
        """
        Automatically cast a string value to the appropriate Python type.

        Parameters:
            value: The value to cast

        Returns:
            The casted value (bool, int, float, or str)
        """
        if value is None:
            return None

        if isinstance(value, str):
            if value.lower() in ("true", "false"):
                return value.lower() == "true"

        if isinstance(value, str) and value.isdigit():
            return int(value)

        try:
            return float(value)
        except (ValueError, TypeError):
            pass

        return value

    def __getattr__(self, key):
        """
        Get a configuration value with automatic type casting.

        Parameters:
            key (str): Configuration key to retrieve

        Returns:
            The configuration value with appropriate type
        """
        if key.startswith("_"):
            raise AttributeError(key)
        value = (
            self._values.get(key)
            or DEFAULTS.get(self._section, {}).get(key)
        )
        return self.auto_cast(value)


class Config:
    """
    Application settings for sdq.

    Settings that tune numerics and orchestration (burn-in, tolerances, worker
    count, logging) live in an INI file and are merged over DEFAULTS. Model
    descriptions are not part of this file; they come from the JSON experiment
    configuration (see app.utils.experiment).
    """

    def __init__(self, config_path: str = None):
        """
        Initialize the configuration manager.

        Parameters:
            config_path (str): Path to the INI file. Defaults to $SDQ_CONFIG or ./conf/sdq.cfg
        """
        self.config_path = config_path or os.environ.get("SDQ_CONFIG", "./conf/sdq.cfg")
        self.load_config()

    def load_config(self):
        """
        Load configuration from file.

        Reads the INI file (a missing file means pure defaults), merges it with
        DEFAULTS and validates the result.
        """
        parser = configparser.ConfigParser()
        parser.optionxform = lambda optionstr: str(optionstr)  # keep camelCase keys
        parser.read(self.config_path)
        self._namespaces = {}

        for section in set(DEFAULTS.keys()).union(parser.sections()):
            values = dict(DEFAULTS.get(section, {}))
            if parser.has_section(section):
                values.update(parser[section])
            self._namespaces[section] = ConfigNamespace(section, values)

        self.validate_config()

    def validate_config(self):
        """
        Validate configuration structure and values.

        Every problem is collected first; a single ValueError listing all of
        them is raised at the end.
        """
        errors = []

        general = self._namespaces["general"]
        if not isinstance(general.workers, int) or general.workers < 0:
            errors.append("general.workers must be a non-negative integer (0 = physical cores)")

        simulation = self._namespaces["simulation"]
        if not self.is_fraction(simulation.burnInFraction):
            errors.append("simulation.burnInFraction must be a number in [0, 1)")
        for field in ["queueCap", "minEpochs", "interruptCheckEvery", "samplerBlock"]:
            value = getattr(simulation, field)
            if not isinstance(value, int) or value <= 0:
                errors.append(f"simulation.{field} must be a positive integer")
        if not self.is_positive_number(simulation.tieTolerance):
            errors.append("simulation.tieTolerance must be a positive number")

        clocks = self._namespaces["clocks"]
        for field in ["bracket", "tolerance", "radiusFactor"]:
            if not self.is_positive_number(getattr(clocks, field)):
                errors.append(f"clocks.{field} must be a positive number")

        analyzer = self._namespaces["analyzer"]
        for field in ["quadTolerance", "tailThreshold", "oracleTail"]:
            if not self.is_positive_number(getattr(analyzer, field)):
                errors.append(f"analyzer.{field} must be a positive number")
        if not isinstance(analyzer.ksGridPoints, int) or analyzer.ksGridPoints < 2:
            errors.append("analyzer.ksGridPoints must be an integer >= 2")

        diffusion = self._namespaces["diffusion"]
        for field in ["maxStep", "epsilon", "binWidth"]:
            if not self.is_positive_number(getattr(diffusion, field)):
                errors.append(f"diffusion.{field} must be a positive number")
        if str(diffusion.reflection).lower() not in ("mirror", "projection"):
            errors.append("diffusion.reflection must be one of: mirror, projection")

        logging_config = self._namespaces["logging"]
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if str(logging_config.level).upper() not in valid_levels:
            errors.append(f"logging.level must be one of: {', '.join(valid_levels)}")

        if errors:
            raise ValueError("Configuration validation failed:\n" + "\n".join(f"  - {e}" for e in errors))

    def is_positive_number(self, value):
        """
        Check that a casted value is a finite positive number.

        Parameters:
            value: Casted configuration value

        Returns:
            bool: True if value is an int/float greater than zero
        """
        return isinstance(value, (int, float)) and not isinstance(value, bool) and 0 < value < float("inf")

    def is_fraction(self, value):
        """
        Check that a casted value lies in [0, 1).

        Parameters:
            value: Casted configuration value

        Returns:
            bool: True if value is a number in [0, 1)
        """
        return isinstance(value, (int, float)) and not isinstance(value, bool) and 0 <= value < 1

    def worker_count(self) -> int:
        """
        Resolve the number of worker processes for replications.

        $SDQ_WORKERS wins over general.workers; 0 means one worker per core.

        Returns:
            int: Number of worker processes (at least 1)
        """
        raw = os.environ.get("SDQ_WORKERS")
        workers = self.general.workers
        if raw is not None:
            try:
                workers = int(raw)
            except ValueError:
                logging.warning(f"Ignoring invalid SDQ_WORKERS value '{raw}'")
        if not workers or workers < 1:
            workers = os.cpu_count() or 1
        return workers

    def __getattr__(self, section):
        """
        Get a configuration section by name.

        Parameters:
            section (str): Section name

        Returns:
            ConfigNamespace: The configuration namespace for that section
        """
        if section.startswith("_"):
            raise AttributeError(section)
        if section in self._namespaces:
            return self._namespaces[section]
        raise AttributeError(f"No such config section: {section}")


def create_example_config(example_path: str = "./conf/sdq.example.cfg"):
    """
    Create or refresh an example INI file documenting every setting.

    Parameters:
        example_path (str): Where to write the example file

    Returns:
        bool: True if the file was written, False otherwise
    """
    example_content = f"""# sdq settings
# Copy this file to sdq.cfg (or point $SDQ_CONFIG at it) and adjust.
# Models are not configured here; they live in the JSON experiment file.

[general]
# Worker processes for replications and convergence studies.
# 0 means one worker per core; $SDQ_WORKERS overrides this value.
# Default: {DEFAULTS['general']['workers']}
workers =

# Directory for result files when --out is not given
# Default: {DEFAULTS['general']['outputs']}
outputs =

[simulation]
# Fraction of the event horizon discarded before statistics are collected
# Default: {DEFAULTS['simulation']['burnInFraction']}
burnInFraction =

# Hard limit on the simulated queue length
# Default: {DEFAULTS['simulation']['queueCap']}
queueCap =

# Minimum number of epochs at a probe level before H and Delta are reported
# Default: {DEFAULTS['simulation']['minEpochs']}
minEpochs =

# Relative tolerance under which an arrival and a departure are simultaneous
# Default: {DEFAULTS['simulation']['tieTolerance']}
tieTolerance =

# Events between interrupt checks and progress messages
# Default: {DEFAULTS['simulation']['interruptCheckEvery']}
interruptCheckEvery =

# Number of inter-event times drawn per sampler refill
# Default: {DEFAULTS['simulation']['samplerBlock']}
samplerBlock =

[clocks]
# Initial half-width of the root bracket for eta/zeta
# Default: {DEFAULTS['clocks']['bracket']}
bracket =

# Target absolute residual of the clock equations
# Default: {DEFAULTS['clocks']['tolerance']}
tolerance =

# |theta| must not exceed radiusFactor * n^(1/2)
# Default: {DEFAULTS['clocks']['radiusFactor']}
radiusFactor =

[analyzer]
# Absolute tolerance of adaptive quadrature for tabular profiles
# Default: {DEFAULTS['analyzer']['quadTolerance']}
quadTolerance =

# Integrand level below which the tail of C is truncated
# Default: {DEFAULTS['analyzer']['tailThreshold']}
tailThreshold =

# Tail mass at which the birth-death oracle stops
# Default: {DEFAULTS['analyzer']['oracleTail']}
oracleTail =

# Uniform grid points used by the KS distance
# Default: {DEFAULTS['analyzer']['ksGridPoints']}
ksGridPoints =

[diffusion]
# Largest accepted Euler step
# Default: {DEFAULTS['diffusion']['maxStep']}
maxStep =

# Level above which reflection increments count against complementarity
# Default: {DEFAULTS['diffusion']['epsilon']}
epsilon =

# Histogram bin width of the stationary law
# Default: {DEFAULTS['diffusion']['binWidth']}
binWidth =

# Boundary treatment: mirror or projection
# projection keeps an atom at 0 that biases the histogram by O(sqrt(step)); mirror does not
# Default: {DEFAULTS['diffusion']['reflection']}
reflection =

[logging]
# Log level: DEBUG, INFO, WARNING, ERROR, CRITICAL
# Default: {DEFAULTS['logging']['level']}
level =

# Rotating log file
# Default: {DEFAULTS['logging']['file']}
file =
"""

    try:
        os.makedirs(os.path.dirname(example_path) or ".", exist_ok=True)
        with open(example_path, "w", encoding="utf-8") as f:
            f.write(example_content)

        logging.info(f"Example config file created/updated: {example_path}")
        return True
    except Exception as e:
        logging.error(f"Failed to create/update example config file: {e}")
        return False


# Global instance
config = Config()
