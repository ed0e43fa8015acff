# Helper modules for sdq: configuration, models, engines and reporting
