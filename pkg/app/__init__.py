# crn-spectrum-games - distributed channel and power allocation games for cognitive radio networks

__version__ = "0.1.0"
