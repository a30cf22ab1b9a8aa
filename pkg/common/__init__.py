# Common utilities for the e-commerce publish/subscribe system 